#include "imagine/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "imagine/adam.hpp"
#include "imagine/checkpoint.hpp"
#include "imagine/parallel.hpp"

namespace imagine {

// ------------------------------------------------------------------ classifier

void ClassifierConfig::validate() const {
  if (trunk.empty() || head_hidden == 0) throw InvalidArchitecture("classifier: trunk and head widths must be positive");
  for (auto w : trunk) {
    if (w == 0) throw InvalidArchitecture("classifier: zero-width trunk layer");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("classifier: dropout must be in [0, 1)");
  if (batch == 0) throw std::invalid_argument("classifier: batch must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("classifier: learning rate must be positive");
}

nlohmann::json ClassifierConfig::to_json() const {
  return {{"trunk", trunk}, {"head_hidden", head_hidden}, {"dropout", dropout}, {"steps", steps},
          {"batch", batch}, {"learning_rate", learning_rate}, {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.trunk = j.value("trunk", c.trunk);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

ObservationClassifier::ObservationClassifier(AttributeSchema schema, std::size_t height, std::size_t width,
                                             ClassifierConfig cfg, Rng& rng)
    : schema_(std::move(schema)), height_(height), width_(width), config_(std::move(cfg)) {
  config_.validate();
  if (height_ == 0 || width_ == 0) throw InvalidArchitecture("classifier: empty image size");
  std::vector<std::size_t> sizes{height_ * width_};
  sizes.insert(sizes.end(), config_.trunk.begin(), config_.trunk.end());
  trunk_ = build_mlp(params_, "trunk", sizes, Activation::elu, rng);
  for (std::size_t k = 0; k < schema_.size(); ++k) {
    const std::string name = "head" + std::to_string(k);
    head_hidden_.push_back(build_mlp(params_, name + "/hidden", {sizes.back(), config_.head_hidden}, Activation::none, rng));
    head_out_.push_back(
        build_mlp(params_, name + "/out", {config_.head_hidden, schema_[k].cardinality()}, Activation::none, rng));
  }
}

std::vector<Var> ObservationClassifier::logits(Graph& g, Var x, const std::vector<Tensor>* dropout_masks) const {
  Var h = g.elu(mlp_forward(g, trunk_, x));
  std::vector<Var> out;
  for (std::size_t k = 0; k < schema_.size(); ++k) {
    Var hk = g.elu(mlp_forward(g, head_hidden_[k], h));
    if (dropout_masks) hk = g.mul(hk, g.input((*dropout_masks)[k]));
    out.push_back(mlp_forward(g, head_out_[k], hk));
  }
  return out;
}

void ObservationClassifier::check_images(const Tensor& images) const {
  if (images.rank() != 2 || images.cols() != height_ * width_) {
    throw DimensionError("classifier expects [n x " + std::to_string(height_ * width_) + "] images, got " +
                         images.shape_string());
  }
}

std::vector<Tensor> ObservationClassifier::predict_proba(const Tensor& images) const {
  check_images(images);
  Graph g(&params_);
  std::vector<Tensor> out;
  for (Var l : logits(g, g.input(images))) {
    Tensor p = g.value(l);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto row = p.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double s = 0.0;
      for (double& v : row) s += (v = std::exp(v - mx));
      for (double& v : row) v /= s;
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<int>> ObservationClassifier::classify(const Tensor& images) const {
  check_images(images);
  Graph g(&params_);
  const auto heads = logits(g, g.input(images));
  std::vector<std::vector<int>> out(images.rows(), std::vector<int>(schema_.size()));
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const Tensor& l = g.value(heads[k]);
    for (std::size_t r = 0; r < l.rows(); ++r) {
      const auto row = l.row(r);
      out[r][k] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return out;
}

std::vector<int> ObservationClassifier::classify(std::span<const double> image) const {
  Tensor x = Tensor::matrix(1, image.size());
  std::copy(image.begin(), image.end(), x.values().begin());
  return classify(x).front();
}

void ObservationClassifier::save(const std::filesystem::path& path) const {
  const nlohmann::json manifest = {{"format", kClassifierFormat}, {"version", kClassifierFormatVersion},
                                   {"schema", schema_to_json(schema_)}, {"height", height_},
                                   {"width", width_},               {"config", config_.to_json()},
                                   {"accuracy", accuracy}};
  save_checkpoint(path, to_checkpoint(params_, manifest.dump()));
}

ObservationClassifier ObservationClassifier::load(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ckpt.manifest);
  } catch (const nlohmann::json::exception&) {
    throw FormatError(path.string() + ": checkpoint has no readable classifier manifest");
  }
  if (manifest.value("format", "") != kClassifierFormat) {
    throw FormatError(path.string() + ": not a classifier checkpoint (format '" + manifest.value("format", "") + "')");
  }
  if (manifest.value("version", -1) != kClassifierFormatVersion) {
    throw FormatError(path.string() + ": unsupported classifier checkpoint version");
  }
  try {
    Rng rng(0);
    ObservationClassifier c(schema_from_json(manifest.at("schema")), manifest.at("height").get<std::size_t>(),
                            manifest.at("width").get<std::size_t>(), ClassifierConfig::from_json(manifest.at("config")),
                            rng);
    c.accuracy = manifest.value("accuracy", std::vector<double>{});
    restore_params(c.params_, ckpt);
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": bad classifier manifest: " + ex.what());
  }
}

std::vector<double> classifier_accuracy(const ObservationClassifier& c, const Dataset& d,
                                        std::span<const std::size_t> indices) {
  if (!(c.schema() == d.schema)) throw std::invalid_argument("classifier schema differs from the dataset's");
  std::vector<double> correct(d.schema.size(), 0.0);
  if (indices.empty()) return correct;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const auto part = indices.subspan(start, std::min(kChunk, indices.size() - start));
    const auto preds = c.classify(pixel_batch(d, part));
    for (std::size_t i = 0; i < part.size(); ++i) {
      for (std::size_t k = 0; k < d.schema.size(); ++k) correct[k] += preds[i][k] == d.examples[part[i]].attrs[k];
    }
  }
  for (double& v : correct) v /= static_cast<double>(indices.size());
  return correct;
}

ObservationClassifier train_classifier(const Dataset& d, const ClassifierConfig& cfg) {
  if (d.size() == 0) throw std::invalid_argument("train_classifier: empty dataset");
  Rng rng = stream(cfg.seed, 0);
  ObservationClassifier c(d.schema, d.height, d.width, cfg, rng);

  std::vector<std::size_t> pool = d.indices(Split::train);
  if (pool.empty()) {
    pool.resize(d.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  Adam adam(c.params(), {cfg.learning_rate});
  Rng order = stream(cfg.seed, 1);
  Rng drop = stream(cfg.seed, 2);
  const double keep = 1.0 - cfg.dropout;
  std::size_t cursor = pool.size();
  std::vector<std::size_t> idx(std::min(cfg.batch, pool.size()));

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& i : idx) {
      if (cursor == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), order);
        cursor = 0;
      }
      i = pool[cursor++];
    }
    const LabelBatch y = label_batch(d, idx);
    std::vector<Tensor> masks;
    for (std::size_t k = 0; k < d.schema.size(); ++k) {
      Tensor m = Tensor::matrix(idx.size(), cfg.head_hidden);
      for (double& v : m.values()) v = uniform01(drop) < keep ? 1.0 / keep : 0.0;
      masks.push_back(std::move(m));
    }
    Graph g(&c.params());
    const auto heads = c.logits(g, g.input(pixel_batch(d, idx)), &masks);
    Var ll;
    for (std::size_t k = 0; k < heads.size(); ++k) {
      Var t = g.categorical_loglik(heads[k], y.column(k));
      ll = ll.valid() ? g.add(ll, t) : t;
    }
    Var loss = g.scale(g.mean_all(ll), -1.0);
    if (!std::isfinite(g.scalar(loss))) {
      throw NumericError("classifier training: loss is not finite at step " + std::to_string(step + 1));
    }
    adam.step(c.params(), g.backward(loss));
  }

  std::vector<std::size_t> held = d.indices(Split::test);
  if (held.empty()) held = d.indices(Split::val);
  if (held.empty()) held = pool;
  c.accuracy = classifier_accuracy(c, d, held);
  return c;
}

// ------------------------------------------------------------------ metrics

double correctness(const Predictions& preds, const PartialAttributeVector& query) {
  if (preds.empty()) throw std::invalid_argument("correctness: empty sample set");
  const std::size_t observed = query.observed_count();
  if (observed == 0) throw std::invalid_argument("correctness: query observes no attribute");
  const auto labels = query.labels();
  double total = 0.0;
  for (const auto& p : preds) {
    if (p.size() != labels.size()) throw DimensionError("correctness: prediction length differs from the query");
    std::size_t hits = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) hits += labels[k] >= 0 && p[k] == labels[k];
    total += static_cast<double>(hits) / static_cast<double>(observed);
  }
  return total / static_cast<double>(preds.size());
}

namespace {

void check_distribution(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string("js_divergence: ") + name + " has a negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument(std::string("js_divergence: ") + name + " is not normalized");
}

std::vector<double> point_mass(std::size_t k, int value) {
  std::vector<double> p(k, 0.0);
  p[static_cast<std::size_t>(value)] = 1.0;
  return p;
}

}  // namespace

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw DimensionError("js_divergence: supports differ");
  check_distribution(p, "p");
  check_distribution(q, "q");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::clamp(js, 0.0, 1.0);
}

std::vector<double> prediction_marginal(const Predictions& preds, std::size_t attribute, std::size_t cardinality) {
  if (preds.empty()) throw std::invalid_argument("prediction_marginal: empty sample set");
  std::vector<double> q(cardinality, 0.0);
  for (const auto& p : preds) q.at(static_cast<std::size_t>(p.at(attribute))) += 1.0;
  for (double& v : q) v /= static_cast<double>(preds.size());
  return q;
}

double coverage(const Predictions& preds, const PartialAttributeVector& query, const AttributeSchema& schema,
                const std::vector<std::vector<double>>& train_marginals) {
  query.validate(schema);
  if (query.missing_count() == 0) throw std::invalid_argument("coverage: query has no unobserved attribute");
  double total = 0.0;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    if (query.observed(k)) continue;
    total += 1.0 - js_divergence(train_marginals.at(k), prediction_marginal(preds, k, schema[k].cardinality()));
  }
  return total / static_cast<double>(query.missing_count());
}

double js_overall(const Predictions& preds, const PartialAttributeVector& query, const AttributeSchema& schema,
                  const std::vector<std::vector<double>>& train_marginals) {
  query.validate(schema);
  double total = 0.0;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto q = prediction_marginal(preds, k, schema[k].cardinality());
    if (auto v = query.value(k)) {
      total += 1.0 - js_divergence(point_mass(schema[k].cardinality(), *v), q);
    } else {
      total += 1.0 - js_divergence(train_marginals.at(k), q);
    }
  }
  return total / static_cast<double>(schema.size());
}

double inception_score(const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() < 2) throw std::invalid_argument("inception_score: needs at least 2 samples");
  const std::size_t n = probs.rows(), k = probs.cols();
  std::vector<double> marginal(k, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) marginal[j] += probs.at(r, j) / static_cast<double>(n);
  }
  double kl = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double p = probs.at(r, j);
      if (p > 0.0) kl += p * std::log(p / marginal[j]);
    }
  }
  return std::max(1.0, std::exp(kl / static_cast<double>(n)));
}

double correctness(const ObservationClassifier& c, const Tensor& samples, const PartialAttributeVector& query) {
  return correctness(c.classify(samples), query);
}

double coverage(const ObservationClassifier& c, const Tensor& samples, const PartialAttributeVector& query,
                const std::vector<std::vector<double>>& train_marginals) {
  return coverage(c.classify(samples), query, c.schema(), train_marginals);
}

double js_overall(const ObservationClassifier& c, const Tensor& samples, const PartialAttributeVector& query,
                  const std::vector<std::vector<double>>& train_marginals) {
  return js_overall(c.classify(samples), query, c.schema(), train_marginals);
}

double inception_score(const ObservationClassifier& c, const Tensor& samples, std::size_t attribute) {
  return inception_score(c.predict_proba(samples).at(attribute));
}

// ------------------------------------------------------------------ scenarios

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::iid_concrete: return "iid-concrete";
    case Scenario::abstract: return "abstract";
    case Scenario::comp: return "comp";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "iid-concrete") return Scenario::iid_concrete;
  if (s == "abstract") return Scenario::abstract;
  if (s == "comp") return Scenario::comp;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected iid-concrete, abstract or comp)");
}

MetricSummary summarize(std::span<const double> values, std::size_t splits) {
  MetricSummary out;
  out.count = values.size();
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const std::size_t groups = std::clamp<std::size_t>(splits, 1, values.size());
  if (groups < 2) return out;
  std::vector<double> sum(groups, 0.0), n(groups, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum[i % groups] += values[i];
    n[i % groups] += 1.0;
  }
  double mean = 0.0;
  for (std::size_t gi = 0; gi < groups; ++gi) mean += (sum[gi] /= n[gi]) / static_cast<double>(groups);
  double ss = 0.0;
  for (double m : sum) ss += (m - mean) * (m - mean);
  out.std = std::sqrt(ss / static_cast<double>(groups - 1));
  return out;
}

namespace {

nlohmann::json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

}  // namespace

nlohmann::json EvalReport::to_json(bool with_queries) const {
  nlohmann::json j = {{"scenario", scenario},
                      {"samples_per_query", samples_per_query},
                      {"splits", splits},
                      {"queries", queries.size()},
                      {"correctness", summary_json(correctness)},
                      {"js_overall", summary_json(js_overall)}};
  if (coverage) j["coverage"] = summary_json(*coverage);
  if (with_queries) {
    nlohmann::json detail = nlohmann::json::array();
    for (const auto& q : queries) {
      const auto labels = q.query.labels();
      nlohmann::json r = {{"query", std::vector<int>(labels.begin(), labels.end())}, {"correctness", q.correctness}, {"js_overall", q.js_overall}};
      if (q.coverage) r["coverage"] = *q.coverage;
      detail.push_back(std::move(r));
    }
    j["detail"] = std::move(detail);
  }
  return j;
}

EvalReport evaluate(const JvaeModel& m, const ObservationClassifier& c, std::span<const PartialAttributeVector> queries,
                    const std::vector<std::vector<double>>& train_marginals, const std::string& scenario,
                    const EvalConfig& cfg) {
  if (!(m.schema() == c.schema())) throw std::invalid_argument("evaluate: model and classifier schemas differ");
  if (m.config().image_height != c.height() || m.config().image_width != c.width()) {
    throw std::invalid_argument("evaluate: model and classifier image sizes differ");
  }
  if (cfg.samples_per_query == 0) throw std::invalid_argument("evaluate: samples_per_query must be positive");
  EvalReport report;
  report.scenario = scenario;
  report.samples_per_query = cfg.samples_per_query;
  report.splits = cfg.splits;
  report.queries.resize(queries.size());
  parallel_for(
      queries.size(),
      [&](std::size_t i) {
        Rng rng = stream(cfg.seed, i);
        const Tensor samples = m.imagine(queries[i], cfg.samples_per_query, rng, ImagineMode::sampled_image);
        const auto preds = c.classify(samples);
        QueryResult& r = report.queries[i];
        r.query = queries[i];
        r.correctness = correctness(preds, queries[i]);
        if (cfg.with_coverage && queries[i].missing_count() > 0) {
          r.coverage = coverage(preds, queries[i], m.schema(), train_marginals);
        }
        r.js_overall = js_overall(preds, queries[i], m.schema(), train_marginals);
      },
      1);

  std::vector<double> corr, cov, jso;
  for (const auto& r : report.queries) {
    corr.push_back(r.correctness);
    jso.push_back(r.js_overall);
    if (r.coverage) cov.push_back(*r.coverage);
  }
  report.correctness = summarize(corr, cfg.splits);
  report.js_overall = summarize(jso, cfg.splits);
  if (!cov.empty()) report.coverage = summarize(cov, cfg.splits);
  return report;
}

// ------------------------------------------------------------------ image files

Image tile(const Tensor& images, std::size_t height, std::size_t width, std::size_t columns) {
  if (images.rank() != 2 || images.cols() != height * width) throw DimensionError("tile: images do not match H x W");
  const std::size_t n = images.rows();
  if (n == 0 || columns == 0) throw std::invalid_argument("tile: nothing to tile");
  const std::size_t cols = std::min(columns, n);
  const std::size_t rows = (n + cols - 1) / cols;
  Image out(rows * (height + 1) + 1, cols * (width + 1) + 1);
  std::fill(out.pixels.begin(), out.pixels.end(), 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r0 = 1 + (i / cols) * (height + 1), c0 = 1 + (i % cols) * (width + 1);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) out.at(r0 + r, c0 + c) = std::clamp(images.at(i, r * width + c), 0.0, 1.0);
    }
  }
  return out;
}

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); }

std::ofstream open_binary(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image& img) {
  auto os = open_binary(path);
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> bytes(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), bytes.begin(), to_byte);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_ppm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> rgb) {
  if (rgb.size() != 3 * height * width) throw DimensionError("write_ppm: pixel buffer size mismatch");
  auto os = open_binary(path);
  os << "P6\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_ppm_marked(const std::filesystem::path& path, const Tensor& images, std::size_t height, std::size_t width,
                      std::size_t columns, const std::vector<bool>& wrong) {
  const Image grid = tile(images, height, width, columns);
  std::vector<std::uint8_t> rgb(3 * grid.pixels.size());
  for (std::size_t i = 0; i < grid.pixels.size(); ++i) rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = to_byte(grid.pixels[i]);
  const std::size_t cols = std::min(columns, images.rows());
  for (std::size_t i = 0; i < images.rows() && i < wrong.size(); ++i) {
    if (!wrong[i]) continue;
    const std::size_t r0 = 1 + (i / cols) * (height + 1), c0 = 1 + (i % cols) * (width + 1);
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        if (r != 0 && c != 0 && r + 1 != height && c + 1 != width) continue;
        std::uint8_t* px = &rgb[3 * ((r0 + r) * grid.width + c0 + c)];
        px[0] = 255, px[1] = 0, px[2] = 0;
      }
    }
  }
  write_ppm(path, grid.height, grid.width, rgb);
}

}  // namespace imagine
