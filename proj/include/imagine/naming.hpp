#pragma once

// Concept naming: pick the attribute query that best describes a small set
// of images.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "imagine/dataset.hpp"
#include "imagine/jvae.hpp"

namespace imagine {

struct NamingResult {
  std::size_t best = 0;
  /// Concept-NB: log score per candidate (higher is better).
  /// Concept-Latent: KL per candidate (lower is better).
  std::vector<double> scores;
};

inline constexpr std::size_t kDefaultNamingSamples = 500;

/// log p(X | y) = sum_n log (1/S) sum_s p(x_n | z_s), z_s ~ q(z | y), under a
/// uniform prior over candidates. Argmax, lowest index on ties.
NamingResult concept_nb(const JvaeModel& m, const Tensor& images, std::span<const PartialAttributeVector> candidates,
                        std::size_t mc_samples, Rng& rng);

/// Per-image log (1/S) sum_s p(x_n | z_s), z_s ~ q; `images` is [n x H*W].
std::vector<double> nb_log_marginals(const JvaeModel& m, const Tensor& images, const DiagGaussian& q,
                                     std::size_t mc_samples, Rng& rng);

enum class LatentKl { moment_matched, monte_carlo };

/// KL(q(z | X) || q(z | y)) with q(z | X) the equal-weight mixture of the
/// image posteriors, moment-matched to one Gaussian (or, as a cross-check,
/// estimated by Monte Carlo against the mixture itself). Argmin, lowest index
/// on ties.
NamingResult concept_latent(const JvaeModel& m, const Tensor& images, std::span<const PartialAttributeVector> candidates,
                            LatentKl kl = LatentKl::moment_matched, std::size_t mc_samples = 2000,
                            std::uint64_t seed = 0);
/// The same choice from precomputed posteriors.
NamingResult concept_latent(std::span<const DiagGaussian> image_posteriors,
                            std::span<const DiagGaussian> candidate_posteriors);

enum class NamingMethod { latent, nb };
const char* to_string(NamingMethod m);
NamingMethod naming_method_from_string(const std::string& s);

struct NamingAccuracy {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_split;

  nlohmann::json to_json() const;
};

struct NamingConfig {
  NamingMethod method = NamingMethod::latent;
  std::size_t mc_samples = kDefaultNamingSamples;
  std::uint64_t seed = 0;
};

/// Exact-match accuracy (by attribute values, so duplicate candidates count
/// as the same name) per query split, with the mean and sample std over
/// splits.
NamingAccuracy naming_accuracy(const JvaeModel& m, const Dataset& d, const NamingBank& bank, const NamingConfig& cfg);

/// Accuracy of any namer given as `choose(query) -> candidate index`.
NamingAccuracy naming_accuracy(const NamingBank& bank, const std::function<std::size_t(const NamingQuery&)>& choose);

struct NamingBaselines {
  std::size_t distinct_candidates = 0;
  double chance = 0.0;
  NamingAccuracy most_frequent;

  nlohmann::json to_json() const;
};

/// Chance: one over the distinct candidates. Most frequent: the most common
/// full attribute vector among a query's images (lowest concept index on
/// ties), correct only when it equals the ground-truth name.
NamingBaselines baselines(const Dataset& d, const NamingBank& bank);

}  // namespace imagine
