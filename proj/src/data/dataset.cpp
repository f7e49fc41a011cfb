#include "imagine/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "imagine/parallel.hpp"
#include "imagine/tensor.hpp"

namespace imagine {

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::none: return "none";
    case SplitKind::iid: return "iid";
    case SplitKind::comp: return "comp";
  }
  return "?";
}

SplitKind split_kind_from_string(const std::string& s) {
  if (s == "none") return SplitKind::none;
  if (s == "iid") return SplitKind::iid;
  if (s == "comp") return SplitKind::comp;
  throw std::invalid_argument("unknown split kind '" + s + "' (expected none, iid or comp)");
}

bool operator==(const LabeledExample& a, const LabeledExample& b) {
  return a.split == b.split && a.attrs == b.attrs && a.pixels == b.pixels;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.schema == b.schema && a.height == b.height && a.width == b.width && a.split_kind == b.split_kind &&
         a.examples == b.examples;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == s) out.push_back(i);
  }
  return out;
}

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(examples.begin(), examples.end(), [s](const LabeledExample& e) { return e.split == s; }));
}

std::vector<std::size_t> Dataset::concepts(std::optional<Split> s) const {
  std::set<std::size_t> seen;
  for (const auto& e : examples) {
    if (!s || e.split == *s) seen.insert(schema.concept_index(e.attrs));
  }
  return {seen.begin(), seen.end()};
}

std::vector<std::vector<double>> Dataset::marginals(Split s) const {
  std::vector<std::vector<double>> m;
  for (const auto& a : schema.attributes()) m.emplace_back(a.cardinality(), 0.0);
  std::size_t n = 0;
  for (const auto& e : examples) {
    if (e.split != s) continue;
    ++n;
    for (std::size_t k = 0; k < schema.size(); ++k) m[k][static_cast<std::size_t>(e.attrs[k])] += 1.0;
  }
  if (n == 0) throw std::invalid_argument(std::string("marginals: split ") + to_string(s) + " is empty");
  for (auto& row : m) {
    for (double& v : row) v /= static_cast<double>(n);
  }
  return m;
}

// ------------------------------------------------------------------ generation

namespace {

Image normalized(const Image& src, double max_intensity) {
  Image out = src;
  if (max_intensity != 1.0) {
    for (double& p : out.pixels) p /= max_intensity;
  }
  return out;
}

}  // namespace

bool is_procedural(const DigitSource& src) {
  if (src.images.size() != 10) return false;
  for (int d = 0; d < 10; ++d) {
    if (src.labels[static_cast<std::size_t>(d)] != d) return false;
  }
  return true;
}

Dataset generate_mnista(const DigitSource& src, const MnistAConfig& cfg) {
  if (src.images.size() != src.labels.size() || src.images.empty()) {
    throw std::invalid_argument("generate_mnista: source needs matching, non-empty images and labels");
  }
  if (cfg.per_source == 0) throw std::invalid_argument("generate_mnista: per_source must be positive");
  if (cfg.image_size < 8 || cfg.image_size > 65535) throw std::invalid_argument("generate_mnista: bad image size");

  Dataset d;
  d.schema = AttributeSchema::mnist_a();
  d.height = d.width = cfg.image_size;
  d.seed = cfg.seed;
  const bool procedural = is_procedural(src);
  const std::size_t sources = procedural ? d.schema.concept_count() : src.images.size();
  d.generator = std::string(procedural ? "procedural" : "idx") + " glyphs; " + std::to_string(cfg.per_source) +
                (procedural ? " per concept" : " per source image") + "; bilinear 4x4 supersampled; bernoulli binarized";
  d.examples.resize(sources * cfg.per_source);

  std::vector<Image> glyphs;
  if (procedural) {
    for (const auto& g : src.images) glyphs.push_back(normalized(g, src.max_intensity));
  }

  parallel_for(d.examples.size(), [&](std::size_t i) {
    Rng rng = stream(cfg.seed, i);
    const std::size_t s = i / cfg.per_source;
    std::vector<int> attrs;
    Image glyph;
    if (procedural) {
      attrs = d.schema.concept_values(s);
      glyph = glyphs[static_cast<std::size_t>(attrs[0])];
    } else {
      const int label = src.labels[s];
      if (label < 0 || label > 9) throw std::invalid_argument("generate_mnista: label out of range");
      attrs = {label, static_cast<int>(rng() % 2), static_cast<int>(rng() % 3), static_cast<int>(rng() % 4)};
      glyph = normalized(src.images[s], src.max_intensity);
    }
    const TransformParams t = attrs_to_transform(attrs, glyph, rng, cfg.image_size);
    const Image canvas = render(glyph, t, cfg.image_size);
    d.examples[i] = {binarize(canvas, rng), std::move(attrs), Split::train};
  });
  return d;
}

void make_iid_split(Dataset& d, Rng& rng) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(d.size());
  const auto n_train = static_cast<std::size_t>(std::llround(0.85 * n));
  const auto n_val = static_cast<std::size_t>(std::llround(0.05 * n));
  for (std::size_t r = 0; r < order.size(); ++r) {
    d.examples[order[r]].split = r < n_train ? Split::train : r < n_train + n_val ? Split::val : Split::test;
  }
  d.split_kind = SplitKind::iid;
}

void make_comp_split(Dataset& d, Rng& rng) {
  std::vector<std::size_t> present = d.concepts();
  const std::size_t needed = d.schema.concept_count();
  if (present.size() < needed) {
    throw std::invalid_argument("make_comp_split: only " + std::to_string(present.size()) + " of " +
                                std::to_string(needed) + " concepts are present");
  }
  std::shuffle(present.begin(), present.end(), rng);
  const auto c = static_cast<double>(present.size());
  const auto n_train = static_cast<std::size_t>(std::llround(0.85 * c));
  const auto n_val = static_cast<std::size_t>(std::llround(0.05 * c));
  std::map<std::size_t, Split> assignment;
  for (std::size_t r = 0; r < present.size(); ++r) {
    assignment[present[r]] = r < n_train ? Split::train : r < n_train + n_val ? Split::val : Split::test;
  }
  for (auto& e : d.examples) e.split = assignment.at(d.schema.concept_index(e.attrs));
  d.split_kind = SplitKind::comp;
}

std::vector<PartialAttributeVector> make_abstract_queries(const AttributeSchema& schema, std::size_t level,
                                                          std::size_t variants, Rng& rng) {
  const std::size_t n = schema.size();
  if (level == 0 || level >= n) throw std::invalid_argument("make_abstract_queries: level must be in [1, attributes)");
  std::vector<unsigned> drop_patterns;
  for (unsigned m = 1; m < (1u << n); ++m) {
    if (static_cast<std::size_t>(std::popcount(m)) == level) drop_patterns.push_back(m);
  }
  if (variants == 0 || variants > drop_patterns.size()) {
    throw std::invalid_argument("make_abstract_queries: " + std::to_string(variants) + " variants requested but only " +
                                std::to_string(drop_patterns.size()) + " distinct patterns exist");
  }
  std::vector<PartialAttributeVector> out;
  out.reserve(schema.concept_count() * variants);
  for (std::size_t c = 0; c < schema.concept_count(); ++c) {
    const auto values = schema.concept_values(c);
    std::shuffle(drop_patterns.begin(), drop_patterns.end(), rng);
    for (std::size_t v = 0; v < variants; ++v) {
      auto q = PartialAttributeVector::full(values);
      for (std::size_t k = 0; k < n; ++k) {
        if (drop_patterns[v] & (1u << k)) q.drop(k);
      }
      out.push_back(std::move(q));
    }
  }
  return out;
}

std::vector<PartialAttributeVector> concrete_queries(const Dataset& d, Split s) {
  std::vector<PartialAttributeVector> out;
  for (std::size_t c : d.concepts(s)) out.push_back(PartialAttributeVector::full(d.schema.concept_values(c)));
  return out;
}

// ------------------------------------------------------------------ naming bank

std::size_t NamingBank::distinct_candidates() const {
  std::set<PartialAttributeVector> distinct(candidates.begin(), candidates.end());
  return distinct.size();
}

NamingBank build_naming_bank(const Dataset& d, std::span<const Split> pool, const NamingBankConfig& cfg, Rng& rng) {
  const std::size_t n = d.schema.size();
  std::vector<unsigned> observed_patterns;
  for (unsigned m = 1; m < (1u << n); ++m) observed_patterns.push_back(m);
  if (cfg.patterns_per_concept == 0 || cfg.patterns_per_concept > observed_patterns.size()) {
    throw std::invalid_argument("build_naming_bank: bad patterns_per_concept");
  }

  NamingBank bank;
  for (std::size_t c : d.concepts()) {
    const auto values = d.schema.concept_values(c);
    std::shuffle(observed_patterns.begin(), observed_patterns.end(), rng);
    for (std::size_t p = 0; p < cfg.patterns_per_concept; ++p) {
      auto q = PartialAttributeVector::full(values);
      for (std::size_t k = 0; k < n; ++k) {
        if (!(observed_patterns[p] & (1u << k))) q.drop(k);
      }
      bank.candidates.push_back(std::move(q));
    }
  }

  std::vector<std::size_t> pool_indices;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (std::find(pool.begin(), pool.end(), d.examples[i].split) != pool.end()) pool_indices.push_back(i);
  }

  std::vector<std::size_t> order(bank.candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  bank.splits.assign(cfg.query_splits, {});
  std::size_t split = 0;
  for (std::size_t cand : order) {
    if (split == cfg.query_splits) break;
    std::vector<std::size_t> consistent;
    for (std::size_t i : pool_indices) {
      if (bank.candidates[cand].matches(d.examples[i].attrs)) consistent.push_back(i);
    }
    if (consistent.size() < cfg.images_per_query) {
      ++bank.skipped_concepts;
      continue;
    }
    std::shuffle(consistent.begin(), consistent.end(), rng);
    consistent.resize(cfg.images_per_query);
    bank.splits[split].push_back({cand, std::move(consistent)});
    if (bank.splits[split].size() == cfg.queries_per_split) ++split;
  }
  return bank;
}

// ------------------------------------------------------------------ MNIST-2bit

Dataset make_mnist2bit(const DigitSource& src, std::size_t image_size, std::size_t per_source, std::uint64_t seed) {
  if (src.images.size() != src.labels.size() || src.images.empty()) {
    throw std::invalid_argument("make_mnist2bit: source needs matching, non-empty images and labels");
  }
  if (per_source == 0) throw std::invalid_argument("make_mnist2bit: per_source must be positive");
  Dataset d;
  d.schema = AttributeSchema::mnist_2bit();
  d.height = d.width = image_size;
  d.seed = seed;
  d.generator = "mnist-2bit; " + std::to_string(per_source) + " per source image; bernoulli binarized";
  d.examples.resize(src.images.size() * per_source);
  parallel_for(d.examples.size(), [&](std::size_t i) {
    Rng rng = stream(seed, i);
    const std::size_t s = i / per_source;
    const int label = src.labels[s];
    if (label < 0 || label > 9) throw std::invalid_argument("make_mnist2bit: label out of range");
    Image glyph = normalized(src.images[s], src.max_intensity);
    if (glyph.height != image_size || glyph.width != image_size) {
      // Fill the canvas: the glyph box spans the whole image.
      TransformParams t{1.0 / kGlyphBoxFraction, 0.0, 0.5 * static_cast<double>(image_size),
                        0.5 * static_cast<double>(image_size)};
      glyph = render(glyph, t, image_size);
    }
    d.examples[i] = {binarize(glyph, rng), {label % 2, label >= 5 ? 1 : 0}, Split::train};
  });
  return d;
}

Tensor pixel_batch(const Dataset& d, std::span<const std::size_t> indices) {
  Tensor x = Tensor::matrix(indices.size(), d.pixels());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& px = d.examples.at(indices[r]).pixels;
    std::copy(px.begin(), px.end(), x.row(r).begin());
  }
  return x;
}

LabelBatch label_batch(const Dataset& d, std::span<const std::size_t> indices) {
  LabelBatch b;
  b.rows = indices.size();
  b.attrs = d.schema.size();
  b.values.reserve(b.rows * b.attrs);
  for (std::size_t i : indices) {
    const auto& a = d.examples.at(i).attrs;
    b.values.insert(b.values.end(), a.begin(), a.end());
  }
  return b;
}

// ------------------------------------------------------------------ MNA1 I/O

namespace {

constexpr char kMagic[4] = {'M', 'N', 'A', '1'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_++]) << (8 * i));
    return v;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("dataset truncated reading ") + what + " at byte offset " + std::to_string(pos_));
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* here() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json manifest_json(const Dataset& d) {
  const nlohmann::json schema = schema_to_json(d.schema);
  return {{"format", "MNA1"},
          {"version", kVersion},
          {"height", d.height},
          {"width", d.width},
          {"count", d.size()},
          {"schema", schema},
          {"split_kind", to_string(d.split_kind)},
          {"seed", d.seed},
          {"generator", d.generator},
          {"interpolation", "bilinear, 4x4 supersampled"},
          {"binarization", "per-pixel bernoulli"}};
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  return dataset_path.string() + ".json";
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  if (d.height > 65535 || d.width > 65535) throw std::invalid_argument("write_dataset: image too large");
  if (d.schema.size() > 255) throw std::invalid_argument("write_dataset: too many attributes");
  if (d.size() > 0xffffffffULL) throw std::invalid_argument("write_dataset: too many examples");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint8_t>(out, kVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(d.height));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(d.width));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(d.schema.size()));
  for (const auto& a : d.schema.attributes()) {
    if (a.cardinality() > 255) throw std::invalid_argument("write_dataset: cardinality above 255");
    put<std::uint8_t>(out, static_cast<std::uint8_t>(a.cardinality()));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(d.size()));
  out.reserve(out.size() + d.size() * (1 + d.schema.size() + d.pixels()));
  for (const auto& e : d.examples) {
    if (e.pixels.size() != d.pixels() || e.attrs.size() != d.schema.size()) {
      throw DimensionError("write_dataset: example does not match dataset shape");
    }
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.split));
    for (int v : e.attrs) put<std::uint8_t>(out, static_cast<std::uint8_t>(v));
    out.insert(out.end(), e.pixels.begin(), e.pixels.end());
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());

  std::ofstream ms(manifest_path(path), std::ios::trunc);
  ms << manifest_json(d).dump(2) << '\n';
  if (!ms) throw std::runtime_error("cannot write manifest for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Cursor cur(bytes);

  cur.need(4, "magic");
  if (!std::equal(kMagic, kMagic + 4, cur.here())) throw FormatError(path.string() + ": not an MNA1 dataset (bad magic)");
  cur.skip(4);
  const auto version = cur.get<std::uint8_t>("version");
  if (version != kVersion) {
    throw FormatError(path.string() + ": unsupported MNA1 version " + std::to_string(version) + " (expected 1)");
  }
  Dataset d;
  d.height = cur.get<std::uint16_t>("height");
  d.width = cur.get<std::uint16_t>("width");
  const auto attr_count = cur.get<std::uint8_t>("attribute count");
  std::vector<std::size_t> cards;
  for (std::size_t k = 0; k < attr_count; ++k) {
    cards.push_back(cur.get<std::uint8_t>("cardinality"));
    if (cards.back() < 2) throw FormatError(path.string() + ": cardinality below 2 for attribute " + std::to_string(k));
  }
  const auto count = cur.get<std::uint32_t>("example count");
  const std::size_t record = 1 + attr_count + d.pixels();
  if (cur.remaining() != static_cast<std::size_t>(count) * record) {
    throw FormatError(path.string() + ": header declares " + std::to_string(count) + " examples (" +
                      std::to_string(static_cast<std::size_t>(count) * record) + " bytes) but " +
                      std::to_string(cur.remaining()) + " bytes follow at offset " + std::to_string(cur.pos()));
  }

  d.examples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& e = d.examples[i];
    const auto split = cur.get<std::uint8_t>("split");
    if (split > 2) throw FormatError("example " + std::to_string(i) + " has split byte " + std::to_string(split));
    e.split = static_cast<Split>(split);
    e.attrs.resize(attr_count);
    for (std::size_t k = 0; k < attr_count; ++k) {
      const auto v = cur.get<std::uint8_t>("attribute value");
      if (v >= cards[k]) throw FormatError("example " + std::to_string(i) + " has out-of-range attribute value");
      e.attrs[k] = v;
    }
    e.pixels.assign(cur.here(), cur.here() + d.pixels());
    if (std::any_of(e.pixels.begin(), e.pixels.end(), [](std::uint8_t p) { return p > 1; })) {
      throw FormatError("example " + std::to_string(i) + " has a non-binary pixel");
    }
    cur.skip(d.pixels());
  }

  d.schema = AttributeSchema::generic(cards);
  std::ifstream ms(manifest_path(path));
  if (ms) {
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(ms);
      AttributeSchema named = schema_from_json(m.at("schema"));
      if (named.cardinalities() != cards) throw FormatError(path.string() + ": manifest schema disagrees with data header");
      d.schema = std::move(named);
      d.split_kind = split_kind_from_string(m.value("split_kind", "none"));
      d.seed = m.value("seed", std::uint64_t{0});
      d.generator = m.value("generator", "");
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path.string() + ": malformed manifest: " + ex.what());
    }
  }
  return d;
}

}  // namespace imagine
