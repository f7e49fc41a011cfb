#pragma once

// Observation classifier and the correctness / coverage / JS-overall
// metrics for imagined image sets.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "imagine/dataset.hpp"
#include "imagine/jvae.hpp"

namespace imagine {

struct ClassifierConfig {
  std::vector<std::size_t> trunk{256, 256};
  std::size_t head_hidden = 128;
  double dropout = 0.5;
  std::size_t steps = 4000;
  std::size_t batch = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

class ObservationClassifier {
 public:
  ObservationClassifier(AttributeSchema schema, std::size_t height, std::size_t width, ClassifierConfig cfg, Rng& rng);

  const AttributeSchema& schema() const { return schema_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  const ClassifierConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Per-head logits; `dropout_masks` (one [B x head_hidden] 0/scale tensor
  /// per head) switches on training-time dropout.
  std::vector<Var> logits(Graph& g, Var x, const std::vector<Tensor>* dropout_masks = nullptr) const;

  /// Per-head softmax, each [n x cardinality].
  std::vector<Tensor> predict_proba(const Tensor& images) const;
  /// Argmax per head, lowest index on ties. One vector per image row.
  std::vector<std::vector<int>> classify(const Tensor& images) const;
  std::vector<int> classify(std::span<const double> image) const;

  /// Held-out accuracy per attribute, set by train_classifier.
  std::vector<double> accuracy;

  void save(const std::filesystem::path& path) const;
  static ObservationClassifier load(const std::filesystem::path& path);

 private:
  void check_images(const Tensor& images) const;

  AttributeSchema schema_;
  std::size_t height_, width_;
  ClassifierConfig config_;
  ParamStore params_;
  Mlp trunk_;
  std::vector<Mlp> head_hidden_;
  std::vector<Mlp> head_out_;
};

inline constexpr const char* kClassifierFormat = "imagine-classifier";
inline constexpr int kClassifierFormatVersion = 1;

/// Cross-entropy on every head over the train split (all examples when the
/// dataset is unsplit). Accuracy is measured on the test split, else val,
/// else train.
ObservationClassifier train_classifier(const Dataset& d, const ClassifierConfig& cfg);

/// Per-attribute accuracy of `c` on the selected examples.
std::vector<double> classifier_accuracy(const ObservationClassifier& c, const Dataset& d,
                                        std::span<const std::size_t> indices);

// ---- metrics over classifier predictions (one full vector per sample)

using Predictions = std::vector<std::vector<int>>;

/// Mean over samples of the fraction of observed attributes predicted as
/// queried.
double correctness(const Predictions& preds, const PartialAttributeVector& query);
/// Jensen-Shannon divergence in bits.
double js_divergence(std::span<const double> p, std::span<const double> q);
/// Empirical distribution of attribute k over the predictions.
std::vector<double> prediction_marginal(const Predictions& preds, std::size_t attribute, std::size_t cardinality);
/// Mean over unobserved attributes of 1 - JS(train marginal, prediction marginal).
double coverage(const Predictions& preds, const PartialAttributeVector& query, const AttributeSchema& schema,
                const std::vector<std::vector<double>>& train_marginals);
/// Mean over all attributes of 1 - JS(p_k, q_k), p_k a point mass on the
/// queried value when observed and the train marginal otherwise.
double js_overall(const Predictions& preds, const PartialAttributeVector& query, const AttributeSchema& schema,
                  const std::vector<std::vector<double>>& train_marginals);
/// exp(E_x KL(p(y|x) || p(y))) for one head; `probs` is [n x K].
double inception_score(const Tensor& probs);

double correctness(const ObservationClassifier& c, const Tensor& samples, const PartialAttributeVector& query);
double coverage(const ObservationClassifier& c, const Tensor& samples, const PartialAttributeVector& query,
                const std::vector<std::vector<double>>& train_marginals);
double js_overall(const ObservationClassifier& c, const Tensor& samples, const PartialAttributeVector& query,
                  const std::vector<std::vector<double>>& train_marginals);
double inception_score(const ObservationClassifier& c, const Tensor& samples, std::size_t attribute);

// ---- scenarios

enum class Scenario { iid_concrete, abstract, comp };
const char* to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct QueryResult {
  PartialAttributeVector query;
  double correctness = 0.0;
  std::optional<double> coverage;
  double js_overall = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // over the query splits
  std::size_t count = 0;
};

struct EvalReport {
  std::string scenario;
  std::size_t samples_per_query = 0;
  std::size_t splits = 0;
  std::vector<QueryResult> queries;
  MetricSummary correctness;
  std::optional<MetricSummary> coverage;
  MetricSummary js_overall;

  nlohmann::json to_json(bool with_queries = false) const;
};

struct EvalConfig {
  std::size_t samples_per_query = 10;
  std::size_t splits = 5;
  std::uint64_t seed = 0;
  /// Coverage is computed for queries with unobserved attributes.
  bool with_coverage = false;
};

/// Imagines `samples_per_query` Bernoulli-sampled images per query, scores
/// them with the classifier and summarizes over `splits` groups of queries.
EvalReport evaluate(const JvaeModel& m, const ObservationClassifier& c, std::span<const PartialAttributeVector> queries,
                    const std::vector<std::vector<double>>& train_marginals, const std::string& scenario,
                    const EvalConfig& cfg);

/// Mean over all values and sample standard deviation of the per-group
/// means, value i going to group i mod `splits`.
MetricSummary summarize(std::span<const double> values, std::size_t splits);

// ---- image files

/// Tiles [n x H*W] images in [0,1] into a grid with a 1-pixel gap.
Image tile(const Tensor& images, std::size_t height, std::size_t width, std::size_t columns);
void write_pgm(const std::filesystem::path& path, const Image& img);
/// RGB grid; tiles flagged in `wrong` get a red frame on their border pixels.
void write_ppm_marked(const std::filesystem::path& path, const Tensor& images, std::size_t height, std::size_t width,
                      std::size_t columns, const std::vector<bool>& wrong);
void write_ppm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> rgb);

}  // namespace imagine
