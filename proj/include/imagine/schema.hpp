#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace imagine {

class QueryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Attribute {
  std::string name;
  std::vector<std::string> values;

  std::size_t cardinality() const { return values.size(); }
};

/// Ordered list of discrete attributes. Concepts (fully specified attribute
/// vectors) are enumerated in mixed radix with the first attribute most
/// significant.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> attributes);

  /// class (10) x scale (2) x orientation (3) x location (4) = 240 concepts.
  static AttributeSchema mnist_a();
  /// parity (even/odd) x magnitude (low/high).
  static AttributeSchema mnist_2bit();
  /// Schema with generic names for the given cardinalities.
  static AttributeSchema generic(std::span<const std::size_t> cardinalities);

  std::size_t size() const { return attributes_.size(); }
  const Attribute& operator[](std::size_t k) const { return attributes_[k]; }
  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::vector<std::size_t> cardinalities() const;
  std::size_t total_cardinality() const;
  std::size_t concept_count() const;

  std::vector<int> concept_values(std::size_t concept_index) const;
  std::size_t concept_index(std::span<const int> values) const;
  std::optional<std::size_t> find_attribute(std::string_view name) const;

  friend bool operator==(const AttributeSchema& a, const AttributeSchema& b);

 private:
  std::vector<Attribute> attributes_;
};

bool operator==(const Attribute& a, const Attribute& b);

/// A query y_O: each attribute is either observed with a category index or
/// missing.
class PartialAttributeVector {
 public:
  static constexpr int kMissing = -1;

  PartialAttributeVector() = default;
  explicit PartialAttributeVector(std::vector<int> values) : values_(std::move(values)) {}
  static PartialAttributeVector full(std::span<const int> values);
  static PartialAttributeVector empty(std::size_t attributes);

  std::size_t size() const { return values_.size(); }
  bool observed(std::size_t k) const { return values_[k] != kMissing; }
  std::optional<int> value(std::size_t k) const;
  void set(std::size_t k, int v) { values_[k] = v; }
  void drop(std::size_t k) { values_[k] = kMissing; }

  std::size_t observed_count() const;
  std::size_t missing_count() const { return size() - observed_count(); }
  bool is_full() const { return observed_count() == size(); }
  /// Observed values, or kMissing, per attribute.
  std::span<const int> labels() const { return values_; }
  /// True if every observed attribute agrees with the full vector.
  bool matches(std::span<const int> full_values) const;
  /// Bitmask of observed attributes (bit k set when attribute k observed).
  unsigned mask() const;

  void validate(const AttributeSchema& schema) const;

  friend auto operator<=>(const PartialAttributeVector&, const PartialAttributeVector&) = default;

 private:
  std::vector<int> values_;
};

/// A batch of attribute vectors, row-major, PartialAttributeVector::kMissing
/// for unobserved entries.
struct LabelBatch {
  std::size_t rows = 0;
  std::size_t attrs = 0;
  std::vector<int> values;

  static LabelBatch from(std::span<const PartialAttributeVector> ys);
  static LabelBatch from_full(std::span<const std::vector<int>> ys);
  int at(std::size_t r, std::size_t k) const { return values[r * attrs + k]; }
  std::vector<int> column(std::size_t k) const;
  bool fully_observed() const;
};

/// Parses `name=value,name=value`; omitted attributes and `name=*` are
/// unobserved. Unknown names or values raise QueryError listing the schema.
PartialAttributeVector parse_query(const AttributeSchema& schema, std::string_view text);
std::string format_query(const AttributeSchema& schema, const PartialAttributeVector& q);
std::string describe_schema(const AttributeSchema& schema);

/// [{"name": ..., "values": [...]}, ...]
nlohmann::json schema_to_json(const AttributeSchema& schema);
AttributeSchema schema_from_json(const nlohmann::json& j);

}  // namespace imagine
