#include <gtest/gtest.h>

#include <cmath>

#include "imagine/naming.hpp"
#include "support.hpp"

using namespace imagine;

namespace {

DiagGaussian gaussian(std::vector<double> mean, double log_var) {
  DiagGaussian g;
  g.log_var.assign(mean.size(), log_var);
  g.mean = std::move(mean);
  return g;
}

// A bank over a tiny dataset whose queries are each paired with images of
// their own candidate.
struct Fixture {
  Dataset d = fixture::tiny_dataset(fixture::tiny_config(), 60, 11);
  NamingBank bank;

  Fixture() {
    Rng rng(12);
    const std::vector<Split> pool{Split::train};
    bank = build_naming_bank(d, pool, NamingBankConfig{2, 3, 2, 4}, rng);
  }
};

}  // namespace

TEST(ConceptLatent, PicksTheSeparatedCandidate) {
  const std::vector<DiagGaussian> candidates{gaussian({-5, 0}, 0), gaussian({0, 5}, 0), gaussian({5, 0}, 0)};
  for (std::size_t target = 0; target < 3; ++target) {
    std::vector<DiagGaussian> images;
    for (int i = 0; i < 5; ++i) {
      auto g = candidates[target];
      g.mean[0] += 0.1 * (i - 2);
      g.log_var.assign(2, -2.0);
      images.push_back(g);
    }
    const NamingResult r = concept_latent(images, candidates);
    EXPECT_EQ(r.best, target);
    ASSERT_EQ(r.scores.size(), 3u);
  }
}

TEST(ConceptLatent, ScoresAreKlOfTheMomentMatchedMixture) {
  const std::vector<DiagGaussian> images{gaussian({0, 0}, 0), gaussian({2, 0}, 0)};
  const std::vector<DiagGaussian> cand{gaussian({1, 0}, std::log(2.0))};
  // Mixture moments: mean (1, 0), variance (2, 1).
  DiagGaussian mm;
  mm.mean = {1, 0};
  mm.log_var = {std::log(2.0), 0.0};
  EXPECT_NEAR(concept_latent(images, cand).scores[0], kl_diag(mm, cand[0]), 1e-14);
}

TEST(ConceptLatent, TiesGoToTheFirstCandidate) {
  const std::vector<DiagGaussian> images{gaussian({0, 0}, 0)};
  const std::vector<DiagGaussian> cand{gaussian({1, 0}, 0), gaussian({-1, 0}, 0), gaussian({0, 1}, 0)};
  EXPECT_EQ(concept_latent(images, cand).best, 0u);
}

TEST(ConceptLatent, ModelVariantsAgreeOnClearCases) {
  const JvaeModel m = fixture::tiny_model(13);
  const Batch b = fixture::tiny_batch(m.config(), 4, 14);
  const std::vector<PartialAttributeVector> cands{PartialAttributeVector(std::vector<int>{0, -1}),
                                                  PartialAttributeVector(std::vector<int>{1, 2})};
  const NamingResult mm = concept_latent(m, b.x, cands);
  const NamingResult again = concept_latent(m, b.x, cands);
  EXPECT_EQ(mm.scores, again.scores);
  const NamingResult mc = concept_latent(m, b.x, cands, LatentKl::monte_carlo, 4000, 1);
  // The moment-matched Gaussian has the mixture's moments, so its KL is a
  // lower bound up to Monte Carlo noise... only the ordering is compared.
  ASSERT_EQ(mc.scores.size(), 2u);
  for (double s : mc.scores) EXPECT_TRUE(std::isfinite(s));
}

TEST(ConceptNb, LogMarginalsMatchDirectAverage) {
  const JvaeModel m = fixture::tiny_model(15);
  const Batch b = fixture::tiny_batch(m.config(), 3, 16);
  const DiagGaussian q = m.encode_attrs(PartialAttributeVector(std::vector<int>{1, -1}));
  Rng r1(17), r2(17);
  const auto fast = nb_log_marginals(m, b.x, q, 50, r1);
  Tensor z = Tensor::matrix(50, 2);
  for (std::size_t s = 0; s < 50; ++s) {
    const auto draw = q.sample(r2);
    z.at(s, 0) = draw[0];
    z.at(s, 1) = draw[1];
  }
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor xs = Tensor::matrix(50, 9);
    for (std::size_t s = 0; s < 50; ++s) std::copy(b.x.row(n).begin(), b.x.row(n).end(), xs.row(s).begin());
    const Tensor ll = m.log_lik_image(z, xs);
    long double sum = 0;
    for (std::size_t s = 0; s < 50; ++s) sum += std::exp(static_cast<long double>(ll.at(s, 0)));
    EXPECT_NEAR(fast[n], static_cast<double>(std::log(sum / 50)), 1e-9);
  }
}

TEST(ConceptNb, BestIsTheArgmax) {
  const JvaeModel m = fixture::tiny_model(18);
  const Batch b = fixture::tiny_batch(m.config(), 4, 19);
  const std::vector<PartialAttributeVector> cands{PartialAttributeVector(std::vector<int>{0, -1}),
                                                  PartialAttributeVector(std::vector<int>{1, 2}),
                                                  PartialAttributeVector(std::vector<int>{-1, 1})};
  Rng rng(20);
  const NamingResult r = concept_nb(m, b.x, cands, 200, rng);
  for (double s : r.scores) EXPECT_LE(s, r.scores[r.best]);
  Rng single(21);
  EXPECT_EQ(concept_nb(m, b.x, std::span(cands).first(1), 10, single).best, 0u);
  EXPECT_THROW(concept_nb(m, b.x, std::span(cands).first(0), 10, single), std::invalid_argument);
}

TEST(NamingAccuracy, OracleAndWrongNamers) {
  const Fixture f;
  ASSERT_EQ(f.bank.splits.size(), 2u);
  const NamingAccuracy oracle = naming_accuracy(f.bank, [](const NamingQuery& q) { return q.candidate; });
  EXPECT_EQ(oracle.mean, 1.0);
  EXPECT_EQ(oracle.std, 0.0);
  EXPECT_EQ(oracle.per_split.size(), 2u);
  // A namer that always answers with some other name.
  const NamingAccuracy wrong = naming_accuracy(f.bank, [&](const NamingQuery& q) {
    for (std::size_t c = 0; c < f.bank.candidates.size(); ++c) {
      if (!(f.bank.candidates[c] == f.bank.candidates[q.candidate])) return c;
    }
    return q.candidate;
  });
  EXPECT_EQ(wrong.mean, 0.0);
}

TEST(NamingAccuracy, ModelMethodsRunAndAreDeterministic) {
  const Fixture f;
  const JvaeModel m = fixture::tiny_model(22);
  for (auto method : {NamingMethod::latent, NamingMethod::nb}) {
    NamingConfig cfg;
    cfg.method = method;
    cfg.mc_samples = 20;
    cfg.seed = 23;
    const NamingAccuracy a = naming_accuracy(m, f.d, f.bank, cfg), b = naming_accuracy(m, f.d, f.bank, cfg);
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_GE(a.mean, 0.0);
    EXPECT_LE(a.mean, 1.0);
  }
  EXPECT_EQ(naming_method_from_string("nb"), NamingMethod::nb);
  EXPECT_THROW(naming_method_from_string("bayes"), std::invalid_argument);
}

TEST(Baselines, ChanceAndMostFrequent) {
  const Fixture f;
  const NamingBaselines b = baselines(f.d, f.bank);
  EXPECT_EQ(b.distinct_candidates, f.bank.distinct_candidates());
  EXPECT_DOUBLE_EQ(b.chance, 1.0 / static_cast<double>(b.distinct_candidates));

  // One concept, one fully observed candidate: the mode is always right.
  Dataset d = fixture::tiny_dataset(fixture::tiny_config(), 10, 24);
  for (auto& e : d.examples) e.attrs = {1, 2};
  NamingBank bank;
  bank.candidates = {PartialAttributeVector(std::vector<int>{1, 2})};
  bank.splits = {{NamingQuery{0, {0, 1, 2, 3, 4}}}};
  const NamingBaselines one = baselines(d, bank);
  EXPECT_EQ(one.chance, 1.0);
  EXPECT_EQ(one.most_frequent.mean, 1.0);
  // A partial name is never equal to a full vector.
  bank.candidates = {PartialAttributeVector(std::vector<int>{1, -1})};
  EXPECT_EQ(baselines(d, bank).most_frequent.mean, 0.0);
}
