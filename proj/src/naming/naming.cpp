#include "imagine/naming.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "imagine/graph.hpp"
#include "imagine/kernels.hpp"
#include "imagine/parallel.hpp"

namespace imagine {

std::vector<double> nb_log_marginals(const JvaeModel& m, const Tensor& images, const DiagGaussian& q,
                                     std::size_t mc_samples, Rng& rng) {
  if (mc_samples == 0) throw std::invalid_argument("concept_nb: mc_samples must be positive");
  if (images.rank() != 2 || images.cols() != m.config().pixels()) {
    throw DimensionError("concept_nb: images do not match the model's image size");
  }
  const std::size_t d = m.latent_dim(), hw = m.config().pixels();
  Tensor z = Tensor::matrix(mc_samples, d);
  for (std::size_t s = 0; s < mc_samples; ++s) {
    const auto draw = q.sample(rng);
    std::copy(draw.begin(), draw.end(), z.row(s).begin());
  }
  // log p(x|z) = x . (log p - log(1 - p)) + sum log(1 - p), clamped as in training.
  Tensor a = m.decode_image(z);
  std::vector<double> bias(mc_samples, 0.0);
  for (std::size_t s = 0; s < mc_samples; ++s) {
    auto row = a.row(s);
    for (std::size_t j = 0; j < hw; ++j) {
      const double p = std::clamp(row[j], Graph::kProbClamp, 1.0 - Graph::kProbClamp);
      const double l1 = std::log1p(-p);
      bias[s] += l1;
      row[j] = std::log(p) - l1;
    }
  }
  Tensor ll = Tensor::matrix(images.rows(), mc_samples);
  kernels::gemm_nt(kernels::view(images), kernels::view(a), kernels::view(ll));
  std::vector<double> out(images.rows());
  const double log_s = std::log(static_cast<double>(mc_samples));
  for (std::size_t n = 0; n < images.rows(); ++n) {
    auto row = ll.row(n);
    double mx = -INFINITY;
    for (std::size_t s = 0; s < mc_samples; ++s) mx = std::max(mx, row[s] += bias[s]);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    out[n] = mx + std::log(sum) - log_s;
  }
  return out;
}

namespace {

std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::size_t argmin_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

void require_candidates(std::span<const PartialAttributeVector> candidates, const Tensor& images) {
  if (candidates.empty()) throw std::invalid_argument("naming: no candidates");
  if (images.rank() != 2 || images.rows() == 0) throw std::invalid_argument("naming: no images");
}

}  // namespace

NamingResult concept_nb(const JvaeModel& m, const Tensor& images, std::span<const PartialAttributeVector> candidates,
                        std::size_t mc_samples, Rng& rng) {
  require_candidates(candidates, images);
  const auto posteriors = m.encode_attrs(candidates);
  const std::uint64_t base = rng();
  NamingResult out;
  out.scores.resize(candidates.size());
  parallel_for(
      candidates.size(),
      [&](std::size_t c) {
        Rng r = stream(base, c);
        const auto per_image = nb_log_marginals(m, images, posteriors[c], mc_samples, r);
        out.scores[c] = std::accumulate(per_image.begin(), per_image.end(), 0.0);
      },
      1);
  out.best = argmax_first(out.scores);
  return out;
}

NamingResult concept_latent(std::span<const DiagGaussian> image_posteriors,
                            std::span<const DiagGaussian> candidate_posteriors) {
  if (image_posteriors.empty() || candidate_posteriors.empty()) throw std::invalid_argument("naming: nothing to compare");
  const DiagGaussian g = mixture_moment_match(
      GaussianMixture::uniform(std::vector<DiagGaussian>(image_posteriors.begin(), image_posteriors.end())));
  NamingResult out;
  out.scores.reserve(candidate_posteriors.size());
  for (const auto& c : candidate_posteriors) out.scores.push_back(kl_diag(g, c));
  out.best = argmin_first(out.scores);
  return out;
}

NamingResult concept_latent(const JvaeModel& m, const Tensor& images, std::span<const PartialAttributeVector> candidates,
                            LatentKl kl, std::size_t mc_samples, std::uint64_t seed) {
  require_candidates(candidates, images);
  const auto image_posteriors = m.encode_image(images);
  const auto candidate_posteriors = m.encode_attrs(candidates);
  if (kl == LatentKl::moment_matched) return concept_latent(image_posteriors, candidate_posteriors);
  const GaussianMixture mix = GaussianMixture::uniform(image_posteriors);
  NamingResult out;
  out.scores.resize(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    Rng rng = stream(seed, c);
    out.scores[c] = kl_monte_carlo(mix, candidate_posteriors[c], mc_samples, rng).mean;
  }
  out.best = argmin_first(out.scores);
  return out;
}

const char* to_string(NamingMethod m) { return m == NamingMethod::latent ? "latent" : "nb"; }

NamingMethod naming_method_from_string(const std::string& s) {
  if (s == "latent") return NamingMethod::latent;
  if (s == "nb") return NamingMethod::nb;
  throw std::invalid_argument("unknown naming method '" + s + "' (expected latent or nb)");
}

nlohmann::json NamingAccuracy::to_json() const { return {{"mean", mean}, {"std", std}, {"per_split", per_split}}; }

nlohmann::json NamingBaselines::to_json() const {
  return {{"distinct_candidates", distinct_candidates}, {"chance", chance}, {"most_frequent", most_frequent.to_json()}};
}

namespace {

NamingAccuracy accuracy_where(const NamingBank& bank, const std::function<bool(const NamingQuery&)>& correct) {
  NamingAccuracy out;
  for (const auto& split : bank.splits) {
    if (split.empty()) continue;
    double hits = 0.0;
    for (const auto& q : split) hits += correct(q);
    out.per_split.push_back(hits / static_cast<double>(split.size()));
  }
  if (out.per_split.empty()) return out;
  const auto n = static_cast<double>(out.per_split.size());
  out.mean = std::accumulate(out.per_split.begin(), out.per_split.end(), 0.0) / n;
  if (out.per_split.size() > 1) {
    double ss = 0.0;
    for (double v : out.per_split) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace

NamingAccuracy naming_accuracy(const NamingBank& bank, const std::function<std::size_t(const NamingQuery&)>& choose) {
  return accuracy_where(bank, [&](const NamingQuery& q) {
    return bank.candidates.at(choose(q)) == bank.candidates.at(q.candidate);
  });
}

NamingAccuracy naming_accuracy(const JvaeModel& m, const Dataset& d, const NamingBank& bank, const NamingConfig& cfg) {
  if (!(m.schema() == d.schema)) throw std::invalid_argument("naming: model and dataset schemas differ");
  // Score each distinct name once; index ties resolve to the first occurrence.
  std::map<PartialAttributeVector, std::size_t> ids;
  std::vector<PartialAttributeVector> distinct;
  std::vector<std::size_t> id_of(bank.candidates.size());
  for (std::size_t i = 0; i < bank.candidates.size(); ++i) {
    auto [it, inserted] = ids.emplace(bank.candidates[i], distinct.size());
    if (inserted) distinct.push_back(bank.candidates[i]);
    id_of[i] = it->second;
  }
  const auto posteriors = m.encode_attrs(distinct);
  // First distinct-candidate index, mapped back to some bank index with that name.
  std::vector<std::size_t> bank_index(distinct.size());
  for (std::size_t i = bank.candidates.size(); i-- > 0;) bank_index[id_of[i]] = i;

  if (cfg.method == NamingMethod::latent) {
    return naming_accuracy(bank, [&](const NamingQuery& q) {
      const auto images = m.encode_image(pixel_batch(d, q.image_indices));
      return bank_index[concept_latent(images, posteriors).best];
    });
  }

  std::vector<std::size_t> used;
  for (const auto& split : bank.splits) {
    for (const auto& q : split) used.insert(used.end(), q.image_indices.begin(), q.image_indices.end());
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::map<std::size_t, std::size_t> row_of;
  for (std::size_t r = 0; r < used.size(); ++r) row_of[used[r]] = r;
  const Tensor images = pixel_batch(d, used);
  std::vector<std::vector<double>> table(distinct.size());
  parallel_for(
      distinct.size(),
      [&](std::size_t c) {
        Rng rng = stream(cfg.seed, c);
        table[c] = nb_log_marginals(m, images, posteriors[c], cfg.mc_samples, rng);
      },
      1);
  std::vector<double> scores(distinct.size());
  return naming_accuracy(bank, [&](const NamingQuery& q) {
    for (std::size_t c = 0; c < distinct.size(); ++c) {
      double s = 0.0;
      for (auto i : q.image_indices) s += table[c][row_of.at(i)];
      scores[c] = s;
    }
    return bank_index[argmax_first(scores)];
  });
}

NamingBaselines baselines(const Dataset& d, const NamingBank& bank) {
  NamingBaselines out;
  out.distinct_candidates = bank.distinct_candidates();
  out.chance = out.distinct_candidates == 0 ? 0.0 : 1.0 / static_cast<double>(out.distinct_candidates);
  out.most_frequent = accuracy_where(bank, [&](const NamingQuery& q) {
    std::map<std::size_t, std::size_t> counts;
    for (auto i : q.image_indices) ++counts[d.schema.concept_index(d.examples.at(i).attrs)];
    std::size_t best = counts.begin()->first, best_n = 0;
    for (const auto& [concept_index, n] : counts) {
      if (n > best_n) best = concept_index, best_n = n;
    }
    return PartialAttributeVector::full(d.schema.concept_values(best)) == bank.candidates.at(q.candidate);
  });
  return out;
}

}  // namespace imagine
