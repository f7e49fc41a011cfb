#pragma once

// Labelled binary-image datasets: MNIST-A generation, splits, query banks
// and the MNA1 file format.
//
//   "MNA1" u8 version=1, u16 H, u16 W, u8 attr_count, attr_count x u8
//   cardinalities, u32 count, then count x { u8 split, attr_count x u8
//   values, H*W bytes in {0,1} }
//
// Integers are little-endian. Names, seed and generator options live in a
// JSON sidecar `<file>.json`.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "imagine/image.hpp"
#include "imagine/random.hpp"
#include "imagine/schema.hpp"
#include "imagine/tensor.hpp"

namespace imagine {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };
enum class SplitKind { none, iid, comp };

const char* to_string(Split s);
const char* to_string(SplitKind k);
SplitKind split_kind_from_string(const std::string& s);

struct LabeledExample {
  std::vector<std::uint8_t> pixels;  // H*W values in {0,1}
  std::vector<int> attrs;            // full attribute vector
  Split split = Split::train;
};

struct Dataset {
  AttributeSchema schema;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<LabeledExample> examples;
  SplitKind split_kind = SplitKind::none;
  /// Free-form generator description stored in the sidecar manifest.
  std::string generator;
  std::uint64_t seed = 0;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return examples.size(); }
  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s) const;
  /// Distinct full attribute vectors (as concept indices), sorted.
  std::vector<std::size_t> concepts(std::optional<Split> s = std::nullopt) const;
  /// Empirical per-attribute marginals of the given split.
  std::vector<std::vector<double>> marginals(Split s) const;

  friend bool operator==(const Dataset& a, const Dataset& b);
};

bool operator==(const LabeledExample& a, const LabeledExample& b);

struct MnistAConfig {
  std::size_t image_size = 16;
  /// Renders per source image; with the procedural source this is the
  /// number of examples per concept.
  std::size_t per_source = 20;
  std::uint64_t seed = 0;
};

/// With the procedural source (`src.images.size() == 10`, one glyph per
/// digit) every one of the 240 concepts receives exactly `per_source`
/// examples. With a larger source, each image is rendered `per_source` times
/// with scale, orientation and location drawn uniformly.
Dataset generate_mnista(const DigitSource& src, const MnistAConfig& cfg);
bool is_procedural(const DigitSource& src);

/// Image-level 85/5/10 partition.
void make_iid_split(Dataset& d, Rng& rng);
/// Concept-level partition: of C concepts, round(0.85 C) train, round(0.05 C)
/// val, the rest test (204/12/24 for MNIST-A).
void make_comp_split(Dataset& d, Rng& rng);

/// For every concept, `variants` distinct queries with `level` attributes
/// dropped at random.
std::vector<PartialAttributeVector> make_abstract_queries(const AttributeSchema& schema, std::size_t level,
                                                          std::size_t variants, Rng& rng);
/// Fully specified queries for the distinct concepts of a split.
std::vector<PartialAttributeVector> concrete_queries(const Dataset& d, Split s);

struct NamingQuery {
  std::size_t candidate = 0;               // index into NamingBank::candidates
  std::vector<std::size_t> image_indices;  // 5 dataset indices
};

struct NamingBank {
  std::vector<PartialAttributeVector> candidates;
  std::vector<std::vector<NamingQuery>> splits;  // 3 disjoint query sets
  std::size_t skipped_concepts = 0;

  /// Distinct (mask, observed values) pairs among the candidates.
  std::size_t distinct_candidates() const;
};

struct NamingBankConfig {
  std::size_t patterns_per_concept = 4;
  std::size_t images_per_query = 5;
  std::size_t query_splits = 3;
  std::size_t queries_per_split = 100;
};

/// Candidates: for each concept, distinct non-empty missingness patterns
/// sampled without replacement. Queries: candidates drawn without
/// replacement, each paired with images from the `pool` splits whose labels
/// agree with the candidate's observed attributes. Candidates with too few
/// such images are skipped and counted.
NamingBank build_naming_bank(const Dataset& d, std::span<const Split> pool, const NamingBankConfig& cfg,
                             Rng& rng);

/// Parity (even/odd) and magnitude (<5 / >=5) labels; images untransformed
/// apart from an optional bilinear resize to `image_size` and binarization.
Dataset make_mnist2bit(const DigitSource& src, std::size_t image_size, std::size_t per_source, std::uint64_t seed);

/// Pixels of the selected examples as a [n x H*W] tensor of 0/1 values.
Tensor pixel_batch(const Dataset& d, std::span<const std::size_t> indices);
LabelBatch label_batch(const Dataset& d, std::span<const std::size_t> indices);

void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

}  // namespace imagine
