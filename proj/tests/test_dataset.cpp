#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "imagine/dataset.hpp"
#include "support.hpp"

using namespace imagine;

namespace {

const Dataset& mnista() {
  static const Dataset d = generate_mnista(procedural_source(), MnistAConfig{16, 20, 5});
  return d;
}

Dataset comp_split_copy(std::uint64_t seed) {
  Dataset d = mnista();
  Rng rng(seed);
  make_comp_split(d, rng);
  return d;
}

}  // namespace

TEST(MnistA, SizesAndConceptCoverage) {
  const Dataset& d = mnista();
  EXPECT_EQ(d.size(), 4800u);
  EXPECT_EQ(d.height, 16u);
  EXPECT_EQ(d.concepts().size(), 240u);
  std::vector<std::size_t> per_concept(240, 0);
  for (const auto& e : d.examples) {
    ++per_concept[d.schema.concept_index(e.attrs)];
    ASSERT_EQ(e.pixels.size(), 256u);
    for (auto p : e.pixels) ASSERT_LE(p, 1);
  }
  for (auto n : per_concept) EXPECT_EQ(n, 20u);
}

TEST(MnistA, SameSeedSameBytes) {
  const Dataset again = generate_mnista(procedural_source(), MnistAConfig{16, 20, 5});
  EXPECT_EQ(again, mnista());
  const Dataset other = generate_mnista(procedural_source(), MnistAConfig{16, 1, 6});
  EXPECT_NE(other.examples[0].pixels, mnista().examples[0].pixels);
}

TEST(MnistA, LocationIsVisibleInTheImages) {
  // Mean ink row/column follows the location attribute.
  const Dataset& d = mnista();
  std::vector<double> sum_r(4), sum_c(4), mass(4);
  for (const auto& e : d.examples) {
    for (std::size_t i = 0; i < 256; ++i) {
      sum_r[e.attrs[3]] += e.pixels[i] * static_cast<double>(i / 16);
      sum_c[e.attrs[3]] += e.pixels[i] * static_cast<double>(i % 16);
      mass[e.attrs[3]] += e.pixels[i];
    }
  }
  EXPECT_LT(sum_r[0] / mass[0], 7.5);
  EXPECT_LT(sum_c[0] / mass[0], 7.5);
  EXPECT_GT(sum_c[1] / mass[1], 7.5);
  EXPECT_GT(sum_r[2] / mass[2], 7.5);
  EXPECT_GT(sum_r[3] / mass[3], 7.5);
  EXPECT_GT(sum_c[3] / mass[3], 7.5);
}

TEST(Splits, CompositionalIsConceptDisjoint) {
  const Dataset d = comp_split_copy(1);
  EXPECT_EQ(d.split_kind, SplitKind::comp);
  const auto train = d.concepts(Split::train), val = d.concepts(Split::val), test = d.concepts(Split::test);
  EXPECT_EQ(train.size(), 204u);
  EXPECT_EQ(val.size(), 12u);
  EXPECT_EQ(test.size(), 24u);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  all.insert(test.begin(), test.end());
  EXPECT_EQ(all.size(), 240u);
  EXPECT_EQ(d.count(Split::test), 24u * 20u);
}

TEST(Splits, IidRounding) {
  Dataset d = mnista();
  Rng rng(2);
  make_iid_split(d, rng);
  EXPECT_EQ(d.count(Split::train), 4080u);
  EXPECT_EQ(d.count(Split::val), 240u);
  EXPECT_EQ(d.count(Split::test), 480u);
  Dataset small = fixture::tiny_dataset(fixture::tiny_config(), 7, 3);
  make_iid_split(small, rng);
  EXPECT_EQ(small.count(Split::train), 6u);
  EXPECT_EQ(small.count(Split::val), 0u);
  EXPECT_EQ(small.count(Split::test), 1u);
}

TEST(Splits, CompNeedsEveryConcept) {
  Dataset d = fixture::tiny_dataset(fixture::tiny_config(), 2, 4);
  Rng rng(1);
  EXPECT_THROW(make_comp_split(d, rng), std::invalid_argument);
}

TEST(Marginals, SumToOne) {
  const Dataset d = comp_split_copy(3);
  for (const auto& m : d.marginals(Split::train)) {
    double s = 0;
    for (double p : m) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Mna1, RoundTripAndManifest) {
  const auto dir = fixture::scratch_dir("mna1");
  const Dataset d = comp_split_copy(4);
  write_dataset(d, dir / "d.mna");
  EXPECT_TRUE(std::filesystem::exists(manifest_path(dir / "d.mna")));
  const Dataset back = read_dataset(dir / "d.mna");
  EXPECT_EQ(back, d);
  EXPECT_EQ(back.split_kind, SplitKind::comp);
  EXPECT_EQ(back.seed, d.seed);
}

TEST(Mna1, HeaderBytes) {
  const auto dir = fixture::scratch_dir("mna1hdr");
  const Dataset d = fixture::tiny_dataset(fixture::tiny_config(), 2, 5);
  write_dataset(d, dir / "t.mna");
  std::ifstream in(dir / "t.mna", std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), {});
  ASSERT_GE(b.size(), 15u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "MNA1");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5] | (b[6] << 8), 3);
  EXPECT_EQ(b[9], 2);
  EXPECT_EQ(b[10], 2);
  EXPECT_EQ(b[11], 3);
  EXPECT_EQ(b[12], 2);
  // header 16 bytes, then 2 x (1 + 2 + 9)
  EXPECT_EQ(b.size(), 16u + 2u * 12u);
}

TEST(Mna1, TruncationAndMagic) {
  const auto dir = fixture::scratch_dir("mna1bad");
  const Dataset d = fixture::tiny_dataset(fixture::tiny_config(), 3, 6);
  write_dataset(d, dir / "t.mna");
  const auto size = std::filesystem::file_size(dir / "t.mna");
  std::filesystem::resize_file(dir / "t.mna", size - 5);
  EXPECT_THROW(read_dataset(dir / "t.mna"), FormatError);
  {
    std::ofstream out(dir / "m.mna", std::ios::binary);
    out << "MNB1garbage";
  }
  EXPECT_THROW(read_dataset(dir / "m.mna"), FormatError);
}

TEST(AbstractQueries, DistinctPatternsPerConcept) {
  Rng rng(7);
  const auto schema = AttributeSchema::mnist_a();
  const auto qs = make_abstract_queries(schema, 2, 6, rng);
  ASSERT_EQ(qs.size(), 240u * 6u);
  for (std::size_t c = 0; c < 240; ++c) {
    std::set<unsigned> masks;
    for (std::size_t v = 0; v < 6; ++v) {
      const auto& q = qs[c * 6 + v];
      EXPECT_EQ(q.observed_count(), 2u);
      EXPECT_TRUE(q.matches(schema.concept_values(c)));
      masks.insert(q.mask());
    }
    EXPECT_EQ(masks.size(), 6u);
  }
  EXPECT_THROW(make_abstract_queries(schema, 2, 7, rng), std::invalid_argument);
  EXPECT_THROW(make_abstract_queries(schema, 4, 1, rng), std::invalid_argument);
}

TEST(NamingBank, QueriesAreConsistentAndDisjoint) {
  const Dataset d = comp_split_copy(8);
  Rng rng(9);
  const std::vector<Split> pool{Split::train, Split::val, Split::test};
  const NamingBank bank = build_naming_bank(d, pool, NamingBankConfig{}, rng);
  EXPECT_EQ(bank.candidates.size(), 960u);
  ASSERT_EQ(bank.splits.size(), 3u);
  std::set<std::size_t> used;
  for (const auto& split : bank.splits) {
    EXPECT_EQ(split.size(), 100u);
    for (const auto& q : split) {
      EXPECT_TRUE(used.insert(q.candidate).second);
      ASSERT_EQ(q.image_indices.size(), 5u);
      EXPECT_EQ(std::set<std::size_t>(q.image_indices.begin(), q.image_indices.end()).size(), 5u);
      for (auto i : q.image_indices) EXPECT_TRUE(bank.candidates[q.candidate].matches(d.examples[i].attrs));
      EXPECT_GT(bank.candidates[q.candidate].observed_count(), 0u);
    }
  }
  for (std::size_t c = 0; c < 240; ++c) {
    std::set<unsigned> masks;
    for (std::size_t p = 0; p < 4; ++p) masks.insert(bank.candidates[c * 4 + p].mask());
    EXPECT_EQ(masks.size(), 4u);
  }
  EXPECT_LE(bank.distinct_candidates(), 960u);
  EXPECT_GT(bank.distinct_candidates(), 240u);
}

TEST(NamingBank, SkipsCandidatesWithTooFewImages) {
  Dataset d = fixture::tiny_dataset(fixture::tiny_config(), 4, 10);
  for (auto& e : d.examples) e.attrs = {0, 0};
  Rng rng(1);
  const std::vector<Split> pool{Split::train};
  const NamingBank bank = build_naming_bank(d, pool, NamingBankConfig{1, 5, 1, 10}, rng);
  EXPECT_EQ(bank.skipped_concepts, 1u);
  EXPECT_TRUE(bank.splits[0].empty());
}

TEST(Mnist2bit, LabelsFollowTheDigit) {
  const Dataset d = make_mnist2bit(procedural_source(), 16, 3, 11);
  ASSERT_EQ(d.size(), 30u);
  EXPECT_EQ(d.schema, AttributeSchema::mnist_2bit());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int digit = static_cast<int>(i / 3);
    EXPECT_EQ(d.examples[i].attrs, (std::vector<int>{digit % 2, digit >= 5 ? 1 : 0}));
  }
}
