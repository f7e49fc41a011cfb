#include "imagine/objectives.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "imagine/adam.hpp"

namespace imagine {

const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::telbo: return "telbo";
    case ObjectiveKind::jmvae: return "jmvae";
    case ObjectiveKind::bivcca: return "bivcca";
  }
  return "?";
}

ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "telbo") return ObjectiveKind::telbo;
  if (s == "jmvae") return ObjectiveKind::jmvae;
  if (s == "bivcca") return ObjectiveKind::bivcca;
  throw std::invalid_argument("unknown objective '" + s + "' (expected telbo, jmvae or bivcca)");
}

void ObjectiveConfig::validate() const {
  if (!(lambda_x > 0.0) || !(lambda_y > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("likelihood scales must be > 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("mu must be in [0, 1]");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (mc_samples == 0) throw std::invalid_argument("mc_samples must be >= 1");
}

nlohmann::json ObjectiveConfig::to_json() const {
  return {{"objective", to_string(kind)}, {"lambda_x", lambda_x}, {"lambda_y", lambda_y},
          {"gamma", gamma},               {"alpha", alpha},       {"mu", mu},
          {"beta", beta},                 {"mc_samples", mc_samples}, {"freeze_likelihood", freeze_likelihood}};
}

ObjectiveConfig ObjectiveConfig::from_json(const nlohmann::json& j) { return from_json(j, ObjectiveConfig{}); }

ObjectiveConfig ObjectiveConfig::from_json(const nlohmann::json& j, ObjectiveConfig c) {
  if (j.contains("objective")) c.kind = objective_from_string(j["objective"].get<std::string>());
  c.lambda_x = j.value("lambda_x", c.lambda_x);
  c.lambda_y = j.value("lambda_y", c.lambda_y);
  c.gamma = j.value("gamma", c.gamma);
  c.alpha = j.value("alpha", c.alpha);
  c.mu = j.value("mu", c.mu);
  c.beta = j.value("beta", c.beta);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.freeze_likelihood = j.value("freeze_likelihood", c.freeze_likelihood);
  c.validate();
  return c;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Tensor Noise::eps(std::string_view term, std::size_t sample, std::size_t rows, std::size_t cols) const {
  Rng rng = stream(seed_ ^ fnv1a(term), sample);
  return standard_normal(rng, rows, cols);
}

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices) {
  return {pixel_batch(d, indices), label_batch(d, indices)};
}

// ------------------------------------------------------------------ ELBOs

namespace {

Var accumulate_sum(Graph& g, Var acc, Var term) { return acc.valid() ? g.add(acc, term) : term; }

// Monte-Carlo estimate of E_q[f(z)] per row.
template <typename F>
Var expectation(Graph& g, GaussianVars q, std::size_t rows, std::size_t d, std::size_t mc_samples, const Noise& noise,
                std::string_view term, F&& f) {
  Var acc;
  for (std::size_t s = 0; s < mc_samples; ++s) {
    Var z = reparameterize(g, q, g.input(noise.eps(term, s, rows, d)));
    acc = accumulate_sum(g, acc, f(z));
  }
  return mc_samples == 1 ? acc : g.scale(acc, 1.0 / static_cast<double>(mc_samples));
}

ObjectiveValue finish(Graph& g, std::vector<std::pair<std::string, Var>> row_terms) {
  ObjectiveValue out;
  Var rows;
  for (auto& [name, v] : row_terms) {
    rows = accumulate_sum(g, rows, v);
    out.terms.emplace_back(std::move(name), g.mean_all(v));
  }
  out.total = g.mean_all(rows);
  return out;
}

void append(ObjectiveValue& into, const ObjectiveValue& part, const std::string& prefix) {
  for (const auto& [name, v] : part.terms) into.terms.emplace_back(prefix + name, v);
}

Var combine(Graph& g, std::initializer_list<std::pair<double, Var>> parts) {
  Var acc;
  for (const auto& [w, v] : parts) acc = accumulate_sum(g, acc, w == 1.0 ? v : g.scale(v, w));
  return acc;
}

void require_same_model(const JvaeModel& m, const Batch& b) {
  if (b.x.cols() != m.config().pixels()) throw DimensionError("batch images do not match the model's image size");
  if (b.y.attrs != m.schema().size()) throw DimensionError("batch labels do not match the model's schema");
  if (b.x.rows() != b.y.rows) throw DimensionError("batch images and labels differ in length");
}

}  // namespace

ObjectiveValue elbo_uni(Graph& g, const JvaeModel& m, const Batch& b, Modality modality, double lambda, double beta,
                        std::size_t mc_samples, const Noise& noise, bool frozen_likelihood) {
  require_same_model(m, b);
  const std::size_t d = m.latent_dim();
  if (modality == Modality::image) {
    Var x = g.input(b.x);
    GaussianVars q = m.encode_image(g, x);
    Var rec = expectation(g, q, b.rows(), d, mc_samples, noise, "x",
                          [&](Var z) { return m.image_loglik(g, z, x, frozen_likelihood); });
    return finish(g, {{"rec", g.scale(rec, lambda)}, {"kl", g.scale(kl_standard(g, q), -beta)}});
  }
  GaussianVars q = m.encode_attrs(g, b.y);
  Var rec = expectation(g, q, b.rows(), d, mc_samples, noise, "y",
                        [&](Var z) { return m.attrs_loglik(g, z, b.y, frozen_likelihood); });
  return finish(g, {{"rec", g.scale(rec, lambda)}, {"kl", g.scale(kl_standard(g, q), -beta)}});
}

ObjectiveValue elbo_joint(Graph& g, const JvaeModel& m, const Batch& b, double lambda_x, double lambda_y, double beta,
                          std::size_t mc_samples, const Noise& noise) {
  require_same_model(m, b);
  Var x = g.input(b.x);
  GaussianVars q = m.encode_joint(g, x, b.y);
  Var rec = expectation(g, q, b.rows(), m.latent_dim(), mc_samples, noise, "xy", [&](Var z) {
    return combine(g, {{lambda_x, m.image_loglik(g, z, x)}, {lambda_y, m.attrs_loglik(g, z, b.y)}});
  });
  return finish(g, {{"rec", rec}, {"kl", g.scale(kl_standard(g, q), -beta)}});
}

ObjectiveValue telbo(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise) {
  const auto joint = elbo_joint(g, m, b, cfg.lambda_x, cfg.lambda_y, cfg.beta, cfg.mc_samples, noise);
  const auto image = elbo_uni(g, m, b, Modality::image, cfg.lambda_x, cfg.beta, cfg.mc_samples, noise, cfg.freeze_likelihood);
  const auto attrs = elbo_uni(g, m, b, Modality::attrs, cfg.gamma, cfg.beta, cfg.mc_samples, noise, cfg.freeze_likelihood);
  ObjectiveValue out;
  out.total = g.add(g.add(joint.total, image.total), attrs.total);
  append(out, joint, "xy.");
  append(out, image, "x.");
  append(out, attrs, "y.");
  return out;
}

ObjectiveValue jmvae(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise) {
  require_same_model(m, b);
  Var x = g.input(b.x);
  GaussianVars q = m.encode_joint(g, x, b.y);
  Var rec = expectation(g, q, b.rows(), m.latent_dim(), cfg.mc_samples, noise, "xy", [&](Var z) {
    return combine(g, {{cfg.lambda_x, m.image_loglik(g, z, x)}, {cfg.lambda_y, m.attrs_loglik(g, z, b.y)}});
  });
  std::vector<std::pair<std::string, Var>> rows{{"xy.rec", rec}, {"xy.kl", g.scale(kl_standard(g, q), -cfg.beta)}};
  if (cfg.alpha != 0.0) {
    GaussianVars qy = m.encode_attrs(g, b.y);
    GaussianVars qx = m.encode_image(g, x);
    rows.emplace_back("kl_xy_y", g.scale(g.kl_diag(q.mean, q.log_var, qy.mean, qy.log_var), -cfg.alpha));
    rows.emplace_back("kl_xy_x", g.scale(g.kl_diag(q.mean, q.log_var, qx.mean, qx.log_var), -cfg.alpha));
  }
  return finish(g, std::move(rows));
}

ObjectiveValue bivcca(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise) {
  require_same_model(m, b);
  Var x = g.input(b.x);
  auto bracket = [&](GaussianVars q, std::string_view term) {
    return expectation(g, q, b.rows(), m.latent_dim(), cfg.mc_samples, noise, term, [&](Var z) {
      return combine(g, {{cfg.lambda_x, m.image_loglik(g, z, x)}, {cfg.lambda_y, m.attrs_loglik(g, z, b.y)}});
    });
  };
  std::vector<std::pair<std::string, Var>> rows;
  if (cfg.mu != 0.0) {
    GaussianVars qx = m.encode_image(g, x);
    rows.emplace_back("x.rec", g.scale(bracket(qx, "x"), cfg.mu));
    rows.emplace_back("x.kl", g.scale(kl_standard(g, qx), -cfg.mu * cfg.beta));
  }
  if (cfg.mu != 1.0) {
    GaussianVars qy = m.encode_attrs(g, b.y);
    rows.emplace_back("y.rec", g.scale(bracket(qy, "y"), 1.0 - cfg.mu));
    rows.emplace_back("y.kl", g.scale(kl_standard(g, qy), -(1.0 - cfg.mu) * cfg.beta));
  }
  return finish(g, std::move(rows));
}

ObjectiveValue objective(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise) {
  switch (cfg.kind) {
    case ObjectiveKind::telbo: return telbo(g, m, b, cfg, noise);
    case ObjectiveKind::jmvae: return jmvae(g, m, b, cfg, noise);
    case ObjectiveKind::bivcca: return bivcca(g, m, b, cfg, noise);
  }
  throw std::invalid_argument("unknown objective kind");
}

// ------------------------------------------------------------------ training

nlohmann::json TrainRecord::to_json() const {
  nlohmann::json t = nlohmann::json::object();
  for (const auto& [name, v] : terms) t[name] = v;
  return {{"step", step}, {"total", total}, {"terms", t}, {"seconds", seconds}};
}

void TrainLog::write_jsonl(std::ostream& os) const {
  for (const auto& r : records) os << r.to_json().dump() << '\n';
  os << nlohmann::json{{"summary", true},
                       {"seed", seed},
                       {"steps_requested", steps_requested},
                       {"steps_completed", steps_completed},
                       {"wall_seconds", wall_seconds}}
            .dump()
     << '\n';
}

TrainLog train(JvaeModel& m, const Dataset& d, const ObjectiveConfig& obj, const TrainConfig& cfg, const RecordSink& sink) {
  obj.validate();
  if (!(d.schema == m.schema())) throw std::invalid_argument("train: dataset schema differs from the model's schema");
  if (d.height != m.config().image_height || d.width != m.config().image_width) {
    throw std::invalid_argument("train: dataset image size differs from the model's image size");
  }
  if (cfg.batch == 0 || cfg.log_every == 0) throw std::invalid_argument("train: batch and log_every must be positive");
  std::vector<std::size_t> pool = d.indices(Split::train);
  if (cfg.steps > 0 && pool.empty()) throw std::invalid_argument("train: dataset has no training examples");

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  TrainLog log;
  log.seed = cfg.seed;
  log.steps_requested = cfg.steps;

  Adam adam(m.params(), {cfg.learning_rate});
  Rng order_rng = stream(cfg.seed, 0x5eed);
  std::size_t cursor = pool.size();
  std::vector<std::size_t> idx(std::min(cfg.batch, std::max<std::size_t>(pool.size(), 1)));

  double window_total = 0.0;
  std::map<std::string, double> window_terms;
  std::vector<std::string> term_order;
  std::size_t window = 0;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& i : idx) {
      if (cursor == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), order_rng);
        cursor = 0;
      }
      i = pool[cursor++];
    }
    const Batch batch = make_batch(d, idx);
    const Noise noise(mix64(cfg.seed) ^ mix64(step + 1));

    Gradients grads;
    double value = 0.0;
    std::vector<std::pair<std::string, double>> terms;
    try {
      Graph g(&m.params());
      const ObjectiveValue v = objective(g, m, batch, obj, noise);
      value = g.scalar(v.total);
      for (const auto& [name, t] : v.terms) terms.emplace_back(name, g.scalar(t));
      if (!std::isfinite(value)) throw NumericError("objective is not finite");
      grads = g.backward(g.scale(v.total, -1.0));
      for (std::size_t p = 0; p < m.params().size(); ++p) {
        const auto& e = m.params().entry(p);
        if (e.weight_decay == 0.0 || !e.trainable) continue;
        if (grads[p].size() == 0) grads[p] = Tensor::matrix(e.value.rows(), e.value.cols());
        for (std::size_t j = 0; j < e.value.size(); ++j) grads[p][j] += e.weight_decay * e.value[j];
      }
      adam.step(m.params(), grads);
    } catch (const NumericError& ex) {
      log.steps_completed = step;
      log.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
      throw TrainingDiverged("training diverged at step " + std::to_string(step + 1) + ": " + ex.what(), step);
    }

    window_total += value;
    for (const auto& [name, t] : terms) {
      if (!window_terms.contains(name)) term_order.push_back(name);
      window_terms[name] += t;
    }
    ++window;
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      TrainRecord r;
      r.step = step + 1;
      r.total = window_total / static_cast<double>(window);
      for (const auto& name : term_order) r.terms.emplace_back(name, window_terms[name] / static_cast<double>(window));
      r.seconds = std::chrono::duration<double>(clock::now() - start).count();
      if (sink) sink(r);
      log.records.push_back(std::move(r));
      window_total = 0.0;
      window_terms.clear();
      term_order.clear();
      window = 0;
    }
  }
  log.steps_completed = cfg.steps;
  log.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return log;
}

// ------------------------------------------------------------------ decomposition check

JmvaeDecomposition verify_jmvae_decomposition(const JvaeModel& m, const Dataset& d, std::size_t mc_samples, Rng& rng) {
  if (d.size() == 0) throw std::invalid_argument("verify_jmvae_decomposition: empty dataset");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < d.size(); ++i) groups[d.schema.concept_index(d.examples[i].attrs)].push_back(i);

  JmvaeDecomposition out;
  out.groups = groups.size();
  double var_sum = 0.0;
  for (const auto& [concept_index, members] : groups) {
    const auto values = d.schema.concept_values(concept_index);
    const std::vector<std::size_t> idx(members.begin(), members.end());
    const auto posteriors = m.encode_joint(pixel_batch(d, idx), label_batch(d, idx));
    const DiagGaussian prior_y = m.encode_attrs(PartialAttributeVector::full(values));
    const auto n = static_cast<double>(posteriors.size());

    double lhs = 0.0;
    for (const auto& q : posteriors) lhs += kl_diag(q, prior_y);
    lhs /= n;
    out.lhs += lhs;

    if (posteriors.size() == 1) {
      out.rhs += kl_diag(posteriors[0], prior_y);
      continue;
    }
    // One estimator for KL(q_avg || r) + log N - H(n | z), z ~ q_avg.
    const GaussianMixture q_avg = GaussianMixture::uniform(posteriors);
    const double log_n = std::log(n);
    std::vector<double> logq(posteriors.size());
    double mean = 0.0, m2 = 0.0;
    for (std::size_t s = 0; s < mc_samples; ++s) {
      const auto z = q_avg.sample(rng);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < posteriors.size(); ++j) mx = std::max(mx, logq[j] = posteriors[j].log_density(z));
      double sum = 0.0;
      for (double l : logq) sum += std::exp(l - mx);
      const double log_mix = mx + std::log(sum) - log_n;
      double entropy = 0.0;
      for (double l : logq) {
        const double post = std::exp(l - mx) / sum;
        if (post > 0.0) entropy -= post * std::log(post);
      }
      const double f = log_mix - prior_y.log_density(z) + log_n - entropy;
      const double delta = f - mean;
      mean += delta / static_cast<double>(s + 1);
      m2 += delta * (f - mean);
    }
    out.rhs += mean;
    var_sum += m2 / static_cast<double>(mc_samples - 1) / static_cast<double>(mc_samples);
  }
  const auto groups_n = static_cast<double>(groups.size());
  out.lhs /= groups_n;
  out.rhs /= groups_n;
  out.abs_diff = std::abs(out.lhs - out.rhs);
  out.std_error = std::sqrt(var_sum) / groups_n;
  return out;
}

}  // namespace imagine
