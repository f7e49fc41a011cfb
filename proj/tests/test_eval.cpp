#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "imagine/eval.hpp"
#include "support.hpp"

using namespace imagine;

namespace {

// Brute-force JS in bits straight from the definition.
double js_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  long double kl_pm = 0, kl_qm = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double m = (static_cast<long double>(p[i]) + q[i]) / 2;
    if (p[i] > 0) kl_pm += p[i] * (std::log(static_cast<long double>(p[i])) - std::log(m));
    if (q[i] > 0) kl_qm += q[i] * (std::log(static_cast<long double>(q[i])) - std::log(m));
  }
  return static_cast<double>((kl_pm + kl_qm) / 2 / std::log(2.0L));
}

std::vector<double> random_simplex(Rng& rng, std::size_t k, bool sparse) {
  std::vector<double> v(k);
  double s = 0;
  for (auto& x : v) {
    x = (sparse && rng() % 3 == 0) ? 0.0 : uniform01(rng);
    s += x;
  }
  if (s == 0) v[0] = s = 1;
  for (auto& x : v) x /= s;
  return v;
}

// Attributes readable from the pixels: a = pixel 0, b = pixel 1 + pixel 2.
Dataset learnable_dataset(std::size_t n, std::uint64_t seed) {
  Dataset d = fixture::tiny_dataset(fixture::tiny_config(), n, seed);
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = d.examples[i];
    e.attrs = {e.pixels[0], e.pixels[1] + e.pixels[2]};
    e.split = i % 5 == 0 ? Split::test : Split::train;
  }
  return d;
}

ClassifierConfig small_classifier() {
  ClassifierConfig c;
  c.trunk = {32};
  c.head_hidden = 16;
  c.steps = 1500;
  c.batch = 32;
  c.dropout = 0.1;
  c.seed = 3;
  return c;
}

const ObservationClassifier& trained() {
  static const ObservationClassifier c = train_classifier(learnable_dataset(400, 1), small_classifier());
  return c;
}

}  // namespace

TEST(JsDivergence, MatchesBruteForce) {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 2 + rng() % 9;
    const auto p = random_simplex(rng, k, t % 2 == 0), q = random_simplex(rng, k, t % 3 == 0);
    ASSERT_NEAR(js_divergence(p, q), js_oracle(p, q), 1e-12);
    ASSERT_NEAR(js_divergence(p, q), js_divergence(q, p), 1e-15);
  }
}

TEST(JsDivergence, KnownValuesAndErrors) {
  const std::vector<double> a{1, 0}, b{0, 1}, u{0.5, 0.5};
  EXPECT_DOUBLE_EQ(js_divergence(a, b), 1.0);
  EXPECT_EQ(js_divergence(u, u), 0.0);
  // JS(point, uniform) over 2 outcomes: 1 - (3/4) log2(4/3) ... computed directly.
  const double expect = 0.5 * std::log2(2.0 / 1.5) + 0.5 * (0.5 * std::log2(0.5 / 0.75) + 0.5 * std::log2(0.5 / 0.25));
  EXPECT_NEAR(js_divergence(a, u), expect, 1e-15);
  EXPECT_THROW(js_divergence(std::vector<double>{0.5, 0.6}, u), std::invalid_argument);
  EXPECT_THROW(js_divergence(std::vector<double>{1.0}, u), DimensionError);
}

TEST(Metrics, CorrectnessAveragesObservedAttributes) {
  const PartialAttributeVector q(std::vector<int>{1, -1, 2});
  const Predictions preds{{1, 0, 2}, {1, 1, 0}, {0, 1, 1}, {0, 0, 2}};
  // Per sample: 1, 0.5, 0, 0.5.
  EXPECT_DOUBLE_EQ(correctness(preds, q), 0.5);
  EXPECT_THROW(correctness(preds, PartialAttributeVector::empty(3)), std::invalid_argument);
  EXPECT_THROW(correctness(Predictions{}, q), std::invalid_argument);
}

TEST(Metrics, CoverageAndOverall) {
  const auto schema = AttributeSchema::generic(std::vector<std::size_t>{2, 3});
  const std::vector<std::vector<double>> marginals{{0.5, 0.5}, {0.2, 0.3, 0.5}};
  const Predictions preds{{1, 0}, {1, 2}, {0, 2}, {1, 2}};
  const PartialAttributeVector q(std::vector<int>{1, -1});
  const std::vector<double> q1{0.25, 0.0, 0.75};
  EXPECT_NEAR(coverage(preds, q, schema, marginals), 1 - js_oracle(marginals[1], q1), 1e-12);
  const std::vector<double> point{0, 1}, q0{0.25, 0.75};
  const double overall = ((1 - js_oracle(point, q0)) + (1 - js_oracle(marginals[1], q1))) / 2;
  EXPECT_NEAR(js_overall(preds, q, schema, marginals), overall, 1e-12);
  EXPECT_THROW(coverage(preds, PartialAttributeVector(std::vector<int>{1, 1}), schema, marginals),
               std::invalid_argument);
  // Samples that reproduce the marginal exactly get full coverage.
  const Predictions matched{{0, 0}, {0, 0}, {0, 1}, {0, 1}, {0, 1}, {0, 2}, {0, 2}, {0, 2}, {0, 2}, {0, 2}};
  EXPECT_NEAR(coverage(matched, PartialAttributeVector(std::vector<int>{0, -1}), schema, marginals), 1.0, 1e-12);
}

TEST(Metrics, InceptionScoreBounds) {
  Tensor one_hot = Tensor::matrix(6, 3);
  for (std::size_t r = 0; r < 6; ++r) one_hot.at(r, r % 3) = 1.0;
  EXPECT_NEAR(inception_score(one_hot), 3.0, 1e-12);
  Tensor same = Tensor::matrix(4, 3);
  for (std::size_t r = 0; r < 4; ++r) same.at(r, 0) = 0.2, same.at(r, 1) = 0.3, same.at(r, 2) = 0.5;
  EXPECT_NEAR(inception_score(same), 1.0, 1e-12);
}

TEST(Summarize, InterleavedGroups) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6};
  const MetricSummary s = summarize(v, 2);
  EXPECT_DOUBLE_EQ(s.mean, 3.5);
  // Groups {1,3,5} and {2,4,6}: means 3 and 4, sample std sqrt(0.5).
  EXPECT_NEAR(s.std, std::sqrt(0.5), 1e-15);
  EXPECT_EQ(s.count, 6u);
  EXPECT_EQ(summarize(v, 1).std, 0.0);
  EXPECT_EQ(summarize(std::vector<double>{}, 3).count, 0u);
}

TEST(Classifier, LearnsPixelReadableAttributes) {
  const auto& c = trained();
  ASSERT_EQ(c.accuracy.size(), 2u);
  EXPECT_GT(c.accuracy[0], 0.97);
  EXPECT_GT(c.accuracy[1], 0.97);
  const auto probs = c.predict_proba(pixel_batch(learnable_dataset(4, 2), std::vector<std::size_t>{0, 1, 2, 3}));
  ASSERT_EQ(probs.size(), 2u);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_NEAR(probs[1].at(r, 0) + probs[1].at(r, 1) + probs[1].at(r, 2), 1.0, 1e-12);
  }
}

TEST(Classifier, SaveLoadKeepsPredictions) {
  const auto dir = fixture::scratch_dir("classifier");
  const auto& c = trained();
  c.save(dir / "c.jvc");
  const ObservationClassifier back = ObservationClassifier::load(dir / "c.jvc");
  EXPECT_EQ(back.accuracy, c.accuracy);
  const Dataset d = learnable_dataset(50, 4);
  std::vector<std::size_t> idx(50);
  for (std::size_t i = 0; i < 50; ++i) idx[i] = i;
  EXPECT_EQ(back.classify(pixel_batch(d, idx)), c.classify(pixel_batch(d, idx)));
  EXPECT_THROW(JvaeModel::load(dir / "c.jvc"), FormatError);
}

TEST(Classifier, AccuracyOnChosenExamples) {
  const auto& c = trained();
  const Dataset d = learnable_dataset(30, 5);
  std::vector<std::size_t> idx{0, 1, 2};
  const auto acc = classifier_accuracy(c, d, idx);
  const auto preds = c.classify(pixel_batch(d, idx));
  for (std::size_t k = 0; k < 2; ++k) {
    double hits = 0;
    for (std::size_t r = 0; r < 3; ++r) hits += preds[r][k] == d.examples[r].attrs[k];
    EXPECT_DOUBLE_EQ(acc[k], hits / 3);
  }
}

TEST(Classifier, RejectsBadConfig) {
  ClassifierConfig c;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ClassifierConfig{};
  c.trunk.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Evaluate, ReportShapeAndDeterminism) {
  const JvaeModel m = fixture::tiny_model(6);
  const auto& c = trained();
  const std::vector<PartialAttributeVector> queries{PartialAttributeVector(std::vector<int>{0, 1}),
                                                    PartialAttributeVector(std::vector<int>{1, -1}),
                                                    PartialAttributeVector(std::vector<int>{-1, 2})};
  const std::vector<std::vector<double>> marginals{{0.5, 0.5}, {0.25, 0.5, 0.25}};
  EvalConfig cfg;
  cfg.samples_per_query = 7;
  cfg.splits = 3;
  cfg.seed = 8;
  cfg.with_coverage = true;
  const EvalReport r = evaluate(m, c, queries, marginals, "abstract", cfg);
  ASSERT_EQ(r.queries.size(), 3u);
  EXPECT_FALSE(r.queries[0].coverage.has_value());
  EXPECT_TRUE(r.queries[1].coverage.has_value());
  ASSERT_TRUE(r.coverage.has_value());
  EXPECT_EQ(r.coverage->count, 2u);
  EXPECT_EQ(r.correctness.count, 3u);
  for (const auto& q : r.queries) {
    EXPECT_GE(q.correctness, 0.0);
    EXPECT_LE(q.correctness, 1.0);
    EXPECT_GE(q.js_overall, 0.0);
    EXPECT_LE(q.js_overall, 1.0);
  }
  const EvalReport again = evaluate(m, c, queries, marginals, "abstract", cfg);
  EXPECT_EQ(again.to_json(true), r.to_json(true));
  EXPECT_EQ(r.to_json()["scenario"], "abstract");
}

TEST(Scenario, Names) {
  for (auto s : {Scenario::iid_concrete, Scenario::abstract, Scenario::comp}) {
    EXPECT_EQ(scenario_from_string(to_string(s)), s);
  }
  EXPECT_THROW(scenario_from_string("iid"), std::invalid_argument);
}

TEST(ImageFiles, PgmAndPpmHeaders) {
  const auto dir = fixture::scratch_dir("pnm");
  Tensor imgs = Tensor::matrix(3, 4);
  imgs.at(0, 0) = 1.0;
  const Image grid = tile(imgs, 2, 2, 2);
  EXPECT_EQ(grid.width, 7u);
  EXPECT_EQ(grid.height, 7u);
  EXPECT_EQ(grid.at(0, 0), 0.5);
  EXPECT_EQ(grid.at(1, 1), 1.0);
  write_pgm(dir / "g.pgm", grid);
  std::ifstream in(dir / "g.pgm", std::ios::binary);
  std::string magic;
  std::size_t w, h, maxval;
  in >> magic >> w >> h >> maxval;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 7u);
  EXPECT_EQ(maxval, 255u);
  EXPECT_EQ(std::filesystem::file_size(dir / "g.pgm"), std::string("P5\n7 7\n255\n").size() + 49);

  write_ppm_marked(dir / "g.ppm", imgs, 2, 2, 2, {false, true, false});
  std::ifstream pin(dir / "g.ppm", std::ios::binary);
  pin >> magic >> w >> h >> maxval;
  pin.get();
  std::vector<unsigned char> rgb((std::istreambuf_iterator<char>(pin)), {});
  EXPECT_EQ(magic, "P6");
  ASSERT_EQ(rgb.size(), 3u * 49u);
  // Tile 1 starts at row 1, column 4 and is framed in red.
  const std::size_t px = 3 * (1 * 7 + 4);
  EXPECT_EQ(rgb[px], 255);
  EXPECT_EQ(rgb[px + 1], 0);
  // Tile 0 keeps its gray value.
  EXPECT_EQ(rgb[3 * (1 * 7 + 1)], 255);
  EXPECT_EQ(rgb[3 * (1 * 7 + 1) + 1], 255);
}
