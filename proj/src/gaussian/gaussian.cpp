#include "imagine/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace imagine {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

double log_sum_exp(std::span<const double> xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

double clamp_log_var(double lv) { return std::clamp(lv, kLogVarMin, kLogVarMax); }

DiagGaussian DiagGaussian::standard(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
}

double DiagGaussian::variance(std::size_t i) const { return std::exp(clamp_log_var(log_var[i])); }

double DiagGaussian::precision(std::size_t i) const { return std::exp(-clamp_log_var(log_var[i])); }

double DiagGaussian::log_density(std::span<const double> z) const {
  require_same_dim(z.size(), dim(), "log_density");
  double s = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) {
    const double lv = clamp_log_var(log_var[i]);
    const double d = z[i] - mean[i];
    s += -0.5 * (kLog2Pi + lv + d * d * std::exp(-lv));
  }
  return s;
}

std::vector<double> DiagGaussian::sample(Rng& rng) const {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> z(dim());
  for (std::size_t i = 0; i < dim(); ++i) z[i] = mean[i] + std::exp(0.5 * clamp_log_var(log_var[i])) * n01(rng);
  return z;
}

GaussianMixture GaussianMixture::uniform(std::vector<DiagGaussian> components) {
  if (components.empty()) throw std::invalid_argument("mixture needs at least one component");
  const double w = 1.0 / static_cast<double>(components.size());
  return {std::vector<double>(components.size(), w), std::move(components)};
}

void GaussianMixture::validate() const {
  if (components.empty() || weights.size() != components.size()) {
    throw std::invalid_argument("mixture weights/components mismatch");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("mixture weight is negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights do not sum to 1");
  for (const auto& c : components) require_same_dim(c.dim(), dim(), "mixture");
}

double GaussianMixture::log_density(std::span<const double> z) const {
  std::vector<double> terms;
  terms.reserve(components.size());
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (weights[i] > 0.0) terms.push_back(std::log(weights[i]) + components[i].log_density(z));
  }
  return log_sum_exp(terms);
}

std::vector<double> GaussianMixture::sample(Rng& rng) const {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return components[pick(rng)].sample(rng);
}

DiagGaussian poe_product(std::span<const DiagGaussian> experts, std::size_t d, bool include_prior) {
  if (experts.empty() && !include_prior) {
    throw std::invalid_argument("product of zero experts without the prior is not normalizable");
  }
  for (const auto& e : experts) require_same_dim(e.dim(), d, "poe_product");

  DiagGaussian out{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) {
    double precision = include_prior ? 1.0 : 0.0;
    double weighted = 0.0;
    for (const auto& e : experts) {
      const double p = e.precision(i);
      precision += p;
      weighted += p * e.mean[i];
    }
    out.mean[i] = weighted / precision;
    // 0 - log rather than -log: an empty product must be +0, bit for bit N(0, I).
    out.log_var[i] = clamp_log_var(0.0 - std::log(precision));
  }
  return out;
}

double kl_diag(const DiagGaussian& a, const DiagGaussian& b) {
  require_same_dim(a.dim(), b.dim(), "kl_diag");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double la = clamp_log_var(a.log_var[i]);
    const double lb = clamp_log_var(b.log_var[i]);
    const double d = a.mean[i] - b.mean[i];
    s += 0.5 * (lb - la) + (std::exp(la) + d * d) / (2.0 * std::exp(lb)) - 0.5;
  }
  return s;
}

McEstimate kl_monte_carlo(const Sampler& sample_a, const LogDensity& log_a, const LogDensity& log_b,
                          std::size_t n, Rng& rng) {
  if (n < 1000) throw std::invalid_argument("kl_monte_carlo needs at least 1000 samples");
  // Welford accumulation keeps the variance estimate stable for large n.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::vector<double> z = sample_a(rng);
    const double v = log_a(z) - log_b(z);
    if (!std::isfinite(v)) throw NumericError("kl_monte_carlo: non-finite log-density at sample " + std::to_string(s));
    const double delta = v - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

McEstimate kl_monte_carlo(const DiagGaussian& a, const DiagGaussian& b, std::size_t n, Rng& rng) {
  require_same_dim(a.dim(), b.dim(), "kl_monte_carlo");
  return kl_monte_carlo([&a](Rng& r) { return a.sample(r); },
                        [&a](std::span<const double> z) { return a.log_density(z); },
                        [&b](std::span<const double> z) { return b.log_density(z); }, n, rng);
}

McEstimate kl_monte_carlo(const GaussianMixture& a, const DiagGaussian& b, std::size_t n, Rng& rng) {
  a.validate();
  require_same_dim(a.dim(), b.dim(), "kl_monte_carlo");
  return kl_monte_carlo([&a](Rng& r) { return a.sample(r); },
                        [&a](std::span<const double> z) { return a.log_density(z); },
                        [&b](std::span<const double> z) { return b.log_density(z); }, n, rng);
}

std::vector<std::vector<double>> sample_reparam(const DiagGaussian& g, Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_reparam: n must be positive");
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) out.push_back(g.sample(rng));
  return out;
}

DiagGaussian mixture_moment_match(const GaussianMixture& m) {
  m.validate();
  const std::size_t d = m.dim();
  DiagGaussian out{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) {
    double first = 0.0, second = 0.0;
    for (std::size_t c = 0; c < m.components.size(); ++c) {
      const double w = m.weights[c];
      const double mu = m.components[c].mean[i];
      first += w * mu;
      second += w * (m.components[c].variance(i) + mu * mu);
    }
    const double var = std::max(second - first * first, std::exp(kLogVarMin));
    out.mean[i] = first;
    out.log_var[i] = clamp_log_var(std::log(var));
  }
  return out;
}

std::vector<double> slerp(std::span<const double> z1, std::span<const double> z2, double t) {
  require_same_dim(z1.size(), z2.size(), "slerp");
  double n1 = 0.0, n2 = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    n1 += z1[i] * z1[i];
    n2 += z2[i] * z2[i];
    dot += z1[i] * z2[i];
  }
  if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("slerp: zero vector");
  const double cos_omega = std::clamp(dot / (std::sqrt(n1) * std::sqrt(n2)), -1.0, 1.0);
  const double omega = std::acos(cos_omega);
  std::vector<double> out(z1.size());
  if (omega < 1e-6) {
    for (std::size_t i = 0; i < z1.size(); ++i) out[i] = (1.0 - t) * z1[i] + t * z2[i];
    return out;
  }
  const double s = std::sin(omega);
  const double a = std::sin((1.0 - t) * omega) / s;
  const double b = std::sin(t * omega) / s;
  for (std::size_t i = 0; i < z1.size(); ++i) out[i] = a * z1[i] + b * z2[i];
  return out;
}

// ---------------------------------------------------------------- graph side

Var reparameterize(Graph& g, GaussianVars q, Var eps) {
  Var sd = g.exp(g.scale(q.log_var, 0.5));
  return g.add(q.mean, g.mul(sd, eps));
}

GaussianVars poe_product(Graph& g, std::span<const GaussianVars> experts, std::span<const Var> masks) {
  if (experts.size() != masks.size()) throw DimensionError("poe_product: one mask per expert required");
  if (experts.empty()) throw std::invalid_argument("poe_product: no experts");
  // The prior contributes precision 1 and mean 0.
  const auto& shape = g.value(experts[0].mean).shape();
  Var precision = g.input(Tensor(shape, 1.0));
  // Starting from +0 keeps fully masked rows at +0 (masked terms can be -0).
  Var weighted = g.input(Tensor(shape, 0.0));
  for (std::size_t k = 0; k < experts.size(); ++k) {
    Var p = g.mul(masks[k], g.exp(g.scale(experts[k].log_var, -1.0)));
    precision = g.add(precision, p);
    weighted = g.add(weighted, g.mul(p, experts[k].mean));
  }
  Var variance = g.reciprocal(precision);
  Var log_var = g.add_scalar(g.scale(g.log(precision), -1.0), 0.0);  // -0 -> +0
  return {g.mul(weighted, variance), g.clamp(log_var, kLogVarMin, kLogVarMax)};
}

Var kl_standard(Graph& g, GaussianVars q) {
  const Tensor& shape_of = g.value(q.mean);
  Var zeros = g.input(Tensor(shape_of.shape(), 0.0));
  return g.kl_diag(q.mean, q.log_var, zeros, zeros);
}

}  // namespace imagine
