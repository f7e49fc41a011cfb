#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "imagine/gaussian.hpp"

using namespace imagine;

namespace {

DiagGaussian random_gaussian(Rng& rng, std::size_t d, double spread = 1.0) {
  std::normal_distribution<double> n01;
  DiagGaussian g{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) {
    g.mean[i] = spread * n01(rng);
    g.log_var[i] = 0.6 * n01(rng);
  }
  return g;
}

}  // namespace

TEST(Poe, EmptyQueryIsExactlyStandardNormal) {
  for (std::size_t d : {1u, 2u, 10u}) {
    const DiagGaussian g = poe_product({}, d);
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_EQ(g.mean[i], 0.0);
      EXPECT_EQ(g.log_var[i], 0.0);
    }
  }
}

TEST(Poe, IdenticalStandardExpertsShrinkVariance) {
  for (std::size_t k = 1; k <= 8; ++k) {
    std::vector<DiagGaussian> experts(k, DiagGaussian::standard(3));
    const DiagGaussian g = poe_product(experts, 3);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(g.variance(i), 1.0 / static_cast<double>(k + 1), 1e-12);
      EXPECT_EQ(g.mean[i], 0.0);
    }
  }
}

TEST(Poe, PrecisionNeverDecreasesWhenAddingExperts) {
  Rng rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t k = 1 + rng() % 4;
    std::vector<DiagGaussian> experts;
    for (std::size_t j = 0; j < k; ++j) experts.push_back(random_gaussian(rng, 2));
    const DiagGaussian fewer = poe_product(std::span(experts).first(k - 1), 2);
    const DiagGaussian more = poe_product(experts, 2);
    for (std::size_t i = 0; i < 2; ++i) ASSERT_GE(more.precision(i), fewer.precision(i));
  }
}

TEST(Poe, OrderIndependent) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<DiagGaussian> experts;
    for (int j = 0; j < 4; ++j) experts.push_back(random_gaussian(rng, 3));
    const DiagGaussian a = poe_product(experts, 3);
    std::shuffle(experts.begin(), experts.end(), rng);
    const DiagGaussian b = poe_product(experts, 3);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(a.mean[i], b.mean[i], 1e-12);
      EXPECT_NEAR(a.log_var[i], b.log_var[i], 1e-12);
    }
  }
}

TEST(Poe, MatchesTwoGaussianProductFormula) {
  // N(m1, v1) N(m2, v2) N(0, 1): precision-weighted mean.
  const DiagGaussian a{{1.5}, {std::log(0.5)}}, b{{-2.0}, {std::log(4.0)}};
  const std::vector<DiagGaussian> ex{a, b};
  const DiagGaussian g = poe_product(ex, 1);
  const double prec = 1.0 + 2.0 + 0.25;
  EXPECT_NEAR(g.variance(0), 1.0 / prec, 1e-15);
  EXPECT_NEAR(g.mean[0], (2.0 * 1.5 + 0.25 * -2.0) / prec, 1e-15);
  EXPECT_THROW(poe_product({}, 1, false), std::invalid_argument);
}

TEST(Poe, GraphVersionAgreesWithValueVersionAndRespectsMasks) {
  Rng rng(13);
  const std::size_t b = 3, d = 2;
  std::vector<DiagGaussian> e1, e2;
  Tensor m1 = Tensor::matrix(b, d), l1 = Tensor::matrix(b, d), m2 = Tensor::matrix(b, d), l2 = Tensor::matrix(b, d);
  for (std::size_t r = 0; r < b; ++r) {
    e1.push_back(random_gaussian(rng, d));
    e2.push_back(random_gaussian(rng, d));
    for (std::size_t i = 0; i < d; ++i) {
      m1.at(r, i) = e1[r].mean[i], l1.at(r, i) = e1[r].log_var[i];
      m2.at(r, i) = e2[r].mean[i], l2.at(r, i) = e2[r].log_var[i];
    }
  }
  // Row 0 observes both experts, row 1 only the first, row 2 none.
  const Tensor mask1 = Tensor::from_rows({{1, 1}, {1, 1}, {0, 0}}), mask2 = Tensor::from_rows({{1, 1}, {0, 0}, {0, 0}});
  Graph g;
  std::vector<GaussianVars> experts{{g.input(m1), g.input(l1)}, {g.input(m2), g.input(l2)}};
  std::vector<Var> masks{g.input(mask1), g.input(mask2)};
  const GaussianVars q = poe_product(g, experts, masks);
  const std::vector<std::vector<DiagGaussian>> used{{e1[0], e2[0]}, {e1[1]}, {}};
  for (std::size_t r = 0; r < b; ++r) {
    const DiagGaussian ref = poe_product(used[r], d);
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_NEAR(g.value(q.mean).at(r, i), ref.mean[i], 1e-14);
      EXPECT_NEAR(g.value(q.log_var).at(r, i), ref.log_var[i], 1e-14);
    }
  }
  EXPECT_EQ(g.value(q.mean).at(2, 0), 0.0);
  EXPECT_EQ(g.value(q.log_var).at(2, 1), 0.0);
}

TEST(Kl, ClosedFormAgreesWithMonteCarlo) {
  Rng rng(14);
  int outside = 0;
  for (int pair = 0; pair < 20; ++pair) {
    const DiagGaussian a = random_gaussian(rng, 3), b = random_gaussian(rng, 3);
    const McEstimate mc = kl_monte_carlo(a, b, 200000, rng);
    outside += std::abs(mc.mean - kl_diag(a, b)) > 3.0 * mc.std_error;
  }
  // 3 sigma: expect about 0.05 failures in 20.
  EXPECT_LE(outside, 1);
}

TEST(Kl, IdentityAndNonNegativity) {
  Rng rng(15);
  for (int i = 0; i < 1000; ++i) {
    const DiagGaussian a = random_gaussian(rng, 4), b = random_gaussian(rng, 4);
    EXPECT_EQ(kl_diag(a, a), 0.0);
    EXPECT_GE(kl_diag(a, b), 0.0);
  }
}

TEST(Kl, KnownValue) {
  // KL(N(0,1) || N(1,4)) = log 2 + (1 + 1) / 8 - 1/2.
  const DiagGaussian a{{0.0}, {0.0}}, b{{1.0}, {std::log(4.0)}};
  EXPECT_NEAR(kl_diag(a, b), std::log(2.0) + 0.25 - 0.5, 1e-15);
}

TEST(Gaussian, LogDensityMatchesFormula) {
  const DiagGaussian g{{1.0, -1.0}, {std::log(2.0), 0.0}};
  const std::vector<double> z{0.5, 0.0};
  const double expected = -0.5 * std::log(4 * std::numbers::pi) - 0.25 / 4.0 - 0.5 * std::log(2 * std::numbers::pi) - 0.5;
  EXPECT_NEAR(g.log_density(z), expected, 1e-14);
}

TEST(Mixture, MomentMatchTwoComponentCase) {
  const GaussianMixture m{{0.5, 0.5}, {DiagGaussian{{0.0}, {0.0}}, DiagGaussian{{2.0}, {0.0}}}};
  const DiagGaussian g = mixture_moment_match(m);
  EXPECT_NEAR(g.mean[0], 1.0, 1e-15);
  EXPECT_NEAR(g.variance(0), 2.0, 1e-14);
}

TEST(Mixture, MomentMatchAgreesWithSampleMoments) {
  Rng rng(16);
  std::vector<DiagGaussian> comps;
  for (int c = 0; c < 4; ++c) comps.push_back(random_gaussian(rng, 2, 2.0));
  const GaussianMixture m{{0.1, 0.2, 0.3, 0.4}, comps};
  const DiagGaussian g = mixture_moment_match(m);
  const std::size_t n = 400000;
  for (std::size_t i = 0; i < 2; ++i) {
    double s1 = 0, s2 = 0, s4 = 0;
    std::vector<double> xs(n);
    for (auto& x : xs) {
      x = m.sample(rng)[i];
      s1 += x;
    }
    const double mean = s1 / n;
    for (double x : xs) {
      s2 += (x - mean) * (x - mean);
      s4 += std::pow(x - mean, 4);
    }
    const double var = s2 / (n - 1);
    EXPECT_NEAR(mean, g.mean[i], 4 * std::sqrt(var / n));
    EXPECT_NEAR(var, g.variance(i), 4 * std::sqrt((s4 / n - var * var) / n));
  }
}

TEST(Mixture, ValidateRejectsBadWeights) {
  const DiagGaussian a = DiagGaussian::standard(1);
  EXPECT_THROW((GaussianMixture{{0.5, 0.6}, {a, a}}.validate()), std::invalid_argument);
  EXPECT_THROW((GaussianMixture{{-0.5, 1.5}, {a, a}}.validate()), std::invalid_argument);
  EXPECT_THROW((GaussianMixture{{0.5, 0.5}, {a, DiagGaussian::standard(2)}}.validate()), DimensionError);
  EXPECT_NO_THROW((GaussianMixture::uniform({a, a, a}).validate()));
}

TEST(Slerp, EndpointsAndNorm) {
  const std::vector<double> a{1.0, 0.0}, b{0.0, 2.0};
  const auto s0 = slerp(a, b, 0.0), s1 = slerp(a, b, 1.0), mid = slerp(a, b, 0.5);
  EXPECT_NEAR(s0[0], 1.0, 1e-15);
  EXPECT_NEAR(s0[1], 0.0, 1e-15);
  EXPECT_NEAR(s1[0], 0.0, 1e-15);
  EXPECT_NEAR(s1[1], 2.0, 1e-15);
  // Orthogonal inputs: midpoint weights are both sin(pi/4).
  EXPECT_NEAR(mid[0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(mid[1], 2 * std::sqrt(0.5), 1e-15);
  const std::vector<double> c{1.0, 1.0};
  const auto lin = slerp(c, c, 0.3);
  EXPECT_NEAR(lin[0], 1.0, 1e-15);
}

TEST(Reparameterize, ShiftsAndScalesNoise) {
  Graph g;
  const GaussianVars q{g.input(Tensor::from_rows({{1.0, -2.0}})), g.input(Tensor::from_rows({{std::log(4.0), 0.0}}))};
  const Var z = reparameterize(g, q, g.input(Tensor::from_rows({{0.5, -1.0}})));
  EXPECT_NEAR(g.value(z)[0], 2.0, 1e-15);
  EXPECT_NEAR(g.value(z)[1], -3.0, 1e-15);
  const Var kl = kl_standard(g, q);
  EXPECT_NEAR(g.value(kl)[0], kl_diag(DiagGaussian{{1.0, -2.0}, {std::log(4.0), 0.0}}, DiagGaussian::standard(2)),
              1e-14);
}
