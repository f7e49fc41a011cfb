#include "imagine/schema.hpp"

#include <algorithm>
#include <sstream>

namespace imagine {

bool operator==(const Attribute& a, const Attribute& b) {
  return a.name == b.name && a.values == b.values;
}

bool operator==(const AttributeSchema& a, const AttributeSchema& b) {
  return a.attributes_ == b.attributes_;
}

AttributeSchema::AttributeSchema(std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)) {
  for (const auto& a : attributes_) {
    if (a.cardinality() < 2) throw std::invalid_argument("attribute " + a.name + " needs >= 2 values");
  }
}

AttributeSchema AttributeSchema::mnist_a() {
  return AttributeSchema({
      {"class", {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"}},
      {"scale", {"big", "small"}},
      {"orientation", {"clockwise", "upright", "anticlockwise"}},
      {"location", {"top-left", "top-right", "bottom-left", "bottom-right"}},
  });
}

AttributeSchema AttributeSchema::mnist_2bit() {
  return AttributeSchema({
      {"parity", {"even", "odd"}},
      {"magnitude", {"low", "high"}},
  });
}

AttributeSchema AttributeSchema::generic(std::span<const std::size_t> cardinalities) {
  std::vector<Attribute> attrs;
  for (std::size_t k = 0; k < cardinalities.size(); ++k) {
    Attribute a{"attr" + std::to_string(k), {}};
    for (std::size_t v = 0; v < cardinalities[k]; ++v) a.values.push_back(std::to_string(v));
    attrs.push_back(std::move(a));
  }
  return AttributeSchema(std::move(attrs));
}

std::vector<std::size_t> AttributeSchema::cardinalities() const {
  std::vector<std::size_t> out;
  for (const auto& a : attributes_) out.push_back(a.cardinality());
  return out;
}

std::size_t AttributeSchema::total_cardinality() const {
  std::size_t n = 0;
  for (const auto& a : attributes_) n += a.cardinality();
  return n;
}

std::size_t AttributeSchema::concept_count() const {
  std::size_t n = 1;
  for (const auto& a : attributes_) n *= a.cardinality();
  return n;
}

std::vector<int> AttributeSchema::concept_values(std::size_t index) const {
  if (index >= concept_count()) throw std::out_of_range("concept index out of range");
  std::vector<int> v(size());
  for (std::size_t k = size(); k-- > 0;) {
    v[k] = static_cast<int>(index % attributes_[k].cardinality());
    index /= attributes_[k].cardinality();
  }
  return v;
}

std::size_t AttributeSchema::concept_index(std::span<const int> values) const {
  if (values.size() != size()) throw std::invalid_argument("concept_index: wrong attribute count");
  std::size_t idx = 0;
  for (std::size_t k = 0; k < size(); ++k) {
    if (values[k] < 0 || static_cast<std::size_t>(values[k]) >= attributes_[k].cardinality()) {
      throw std::invalid_argument("concept_index: value out of range for " + attributes_[k].name);
    }
    idx = idx * attributes_[k].cardinality() + static_cast<std::size_t>(values[k]);
  }
  return idx;
}

std::optional<std::size_t> AttributeSchema::find_attribute(std::string_view name) const {
  for (std::size_t k = 0; k < size(); ++k) {
    if (attributes_[k].name == name) return k;
  }
  return std::nullopt;
}

PartialAttributeVector PartialAttributeVector::full(std::span<const int> values) {
  return PartialAttributeVector(std::vector<int>(values.begin(), values.end()));
}

PartialAttributeVector PartialAttributeVector::empty(std::size_t attributes) {
  return PartialAttributeVector(std::vector<int>(attributes, kMissing));
}

std::optional<int> PartialAttributeVector::value(std::size_t k) const {
  if (!observed(k)) return std::nullopt;
  return values_[k];
}

std::size_t PartialAttributeVector::observed_count() const {
  return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](int v) { return v != kMissing; }));
}

bool PartialAttributeVector::matches(std::span<const int> full_values) const {
  if (full_values.size() != values_.size()) return false;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (observed(k) && values_[k] != full_values[k]) return false;
  }
  return true;
}

unsigned PartialAttributeVector::mask() const {
  unsigned m = 0;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (observed(k)) m |= 1u << k;
  }
  return m;
}

void PartialAttributeVector::validate(const AttributeSchema& schema) const {
  if (size() != schema.size()) throw QueryError("query has wrong number of attributes");
  for (std::size_t k = 0; k < size(); ++k) {
    if (values_[k] == kMissing) continue;
    if (values_[k] < 0 || static_cast<std::size_t>(values_[k]) >= schema[k].cardinality()) {
      throw QueryError("value out of range for attribute " + schema[k].name);
    }
  }
}

std::string describe_schema(const AttributeSchema& schema) {
  std::ostringstream os;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    os << (k ? "; " : "") << schema[k].name << " in {";
    for (std::size_t v = 0; v < schema[k].cardinality(); ++v) os << (v ? "," : "") << schema[k].values[v];
    os << '}';
  }
  return os.str();
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

PartialAttributeVector parse_query(const AttributeSchema& schema, std::string_view text) {
  PartialAttributeVector q = PartialAttributeVector::empty(schema.size());
  std::vector<bool> seen(schema.size(), false);
  if (trim(text) == "*") return q;
  while (!trim(text).empty()) {
    const auto comma = text.find(',');
    std::string_view item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw QueryError("query term '" + std::string(item) + "' is not name=value; schema: " + describe_schema(schema));
    }
    const std::string_view name = trim(item.substr(0, eq));
    const std::string_view value = trim(item.substr(eq + 1));
    const auto k = schema.find_attribute(name);
    if (!k) throw QueryError("unknown attribute '" + std::string(name) + "'; schema: " + describe_schema(schema));
    if (seen[*k]) throw QueryError("attribute '" + std::string(name) + "' given twice; schema: " + describe_schema(schema));
    seen[*k] = true;
    if (value == "*") continue;
    const auto& values = schema[*k].values;
    const auto it = std::find(values.begin(), values.end(), value);
    if (it == values.end()) {
      throw QueryError("unknown value '" + std::string(value) + "' for attribute '" + std::string(name) +
                       "'; schema: " + describe_schema(schema));
    }
    q.set(*k, static_cast<int>(it - values.begin()));
  }
  return q;
}

std::string format_query(const AttributeSchema& schema, const PartialAttributeVector& q) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    if (!q.observed(k)) continue;
    os << (first ? "" : ",") << schema[k].name << '=' << schema[k].values[static_cast<std::size_t>(*q.value(k))];
    first = false;
  }
  return first ? std::string("*") : os.str();
}

LabelBatch LabelBatch::from(std::span<const PartialAttributeVector> ys) {
  LabelBatch b;
  b.rows = ys.size();
  b.attrs = ys.empty() ? 0 : ys.front().size();
  b.values.reserve(b.rows * b.attrs);
  for (const auto& y : ys) {
    if (y.size() != b.attrs) throw std::invalid_argument("LabelBatch: rows have different attribute counts");
    b.values.insert(b.values.end(), y.labels().begin(), y.labels().end());
  }
  return b;
}

LabelBatch LabelBatch::from_full(std::span<const std::vector<int>> ys) {
  LabelBatch b;
  b.rows = ys.size();
  b.attrs = ys.empty() ? 0 : ys.front().size();
  b.values.reserve(b.rows * b.attrs);
  for (const auto& y : ys) {
    if (y.size() != b.attrs) throw std::invalid_argument("LabelBatch: rows have different attribute counts");
    b.values.insert(b.values.end(), y.begin(), y.end());
  }
  return b;
}

std::vector<int> LabelBatch::column(std::size_t k) const {
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, k);
  return out;
}

bool LabelBatch::fully_observed() const {
  return std::none_of(values.begin(), values.end(), [](int v) { return v == PartialAttributeVector::kMissing; });
}

nlohmann::json schema_to_json(const AttributeSchema& schema) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : schema.attributes()) out.push_back({{"name", a.name}, {"values", a.values}});
  return out;
}

AttributeSchema schema_from_json(const nlohmann::json& j) {
  std::vector<Attribute> attrs;
  for (const auto& a : j) attrs.push_back({a.at("name").get<std::string>(), a.at("values").get<std::vector<std::string>>()});
  return AttributeSchema(std::move(attrs));
}

}  // namespace imagine
