#pragma once

// Closed-form algebra over diagonal Gaussians in latent space.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "imagine/graph.hpp"
#include "imagine/random.hpp"

namespace imagine {

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;

double clamp_log_var(double lv);

struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> log_var;

  static DiagGaussian standard(std::size_t dim);

  std::size_t dim() const { return mean.size(); }
  double variance(std::size_t i) const;
  double precision(std::size_t i) const;
  double log_density(std::span<const double> z) const;
  std::vector<double> sample(Rng& rng) const;
};

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<DiagGaussian> components;

  /// Equal-weight mixture.
  static GaussianMixture uniform(std::vector<DiagGaussian> components);

  std::size_t dim() const { return components.front().dim(); }
  double log_density(std::span<const double> z) const;
  std::vector<double> sample(Rng& rng) const;
  /// Throws if weights are negative, do not sum to 1, or dimensions differ.
  void validate() const;
};

/// Product of Gaussian experts computed in precision space:
/// precision = sum_k precision_k (+1 for the N(0, I) prior expert),
/// mean = (sum_k precision_k mean_k) / precision. With no experts and the
/// prior included the result is exactly N(0, I).
DiagGaussian poe_product(std::span<const DiagGaussian> experts, std::size_t dim,
                         bool include_prior = true);

/// KL(a || b) in closed form.
double kl_diag(const DiagGaussian& a, const DiagGaussian& b);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

using Sampler = std::function<std::vector<double>(Rng&)>;
using LogDensity = std::function<double(std::span<const double>)>;

/// (1/n) sum_s [log a(z_s) - log b(z_s)], z_s ~ a, with its standard error.
McEstimate kl_monte_carlo(const Sampler& sample_a, const LogDensity& log_a, const LogDensity& log_b,
                          std::size_t n, Rng& rng);
McEstimate kl_monte_carlo(const DiagGaussian& a, const DiagGaussian& b, std::size_t n, Rng& rng);
McEstimate kl_monte_carlo(const GaussianMixture& a, const DiagGaussian& b, std::size_t n, Rng& rng);

/// n reparameterized draws mean + exp(log_var / 2) * eps.
std::vector<std::vector<double>> sample_reparam(const DiagGaussian& g, Rng& rng, std::size_t n);

/// Single Gaussian with the mixture's per-dimension mean and variance.
DiagGaussian mixture_moment_match(const GaussianMixture& m);

/// Spherical interpolation; falls back to linear interpolation when the
/// angle between z1 and z2 is below 1e-6.
std::vector<double> slerp(std::span<const double> z1, std::span<const double> z2, double t);

// ---------------------------------------------------------------- graph side

/// A batch of diagonal Gaussians as graph nodes, each [B x d].
struct GaussianVars {
  Var mean;
  Var log_var;
};

/// mean + exp(log_var / 2) * eps, differentiable in mean and log_var.
Var reparameterize(Graph& g, GaussianVars q, Var eps);

/// Batched product of experts with the prior expert always included.
/// `masks[k]` is a [B x d] constant of 0/1 selecting which rows observe
/// expert k; an all-zero mask drops the expert for that row.
GaussianVars poe_product(Graph& g, std::span<const GaussianVars> experts, std::span<const Var> masks);

/// KL(q || N(0, I)) per row.
Var kl_standard(Graph& g, GaussianVars q);

}  // namespace imagine
