#pragma once

// Training objectives for the joint VAE and the training loop.
//
// Every objective is the per-example value averaged over the batch; the
// optimizer minimizes its negation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imagine/dataset.hpp"
#include "imagine/jvae.hpp"

namespace imagine {

enum class ObjectiveKind { telbo, jmvae, bivcca };
const char* to_string(ObjectiveKind k);
ObjectiveKind objective_from_string(const std::string& s);

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::telbo;
  double lambda_x = 1.0;
  double lambda_y = 50.0;
  double gamma = 50.0;  // attribute likelihood scale in the attribute-only ELBO
  double alpha = 1.0;   // JMVAE
  double mu = 0.7;      // BiVCCA
  double beta = 1.0;
  std::size_t mc_samples = 1;
  /// TELBO: the unimodal ELBOs read the decoders through a stop-gradient.
  bool freeze_likelihood = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ObjectiveConfig from_json(const nlohmann::json& j, ObjectiveConfig defaults);
  static ObjectiveConfig from_json(const nlohmann::json& j);
};

/// Deterministic standard-normal draws keyed by (term, sample). Objectives
/// built from the same Noise share their draws term by term.
class Noise {
 public:
  explicit Noise(std::uint64_t seed) : seed_(seed) {}
  Tensor eps(std::string_view term, std::size_t sample, std::size_t rows, std::size_t cols) const;

 private:
  std::uint64_t seed_;
};

struct Batch {
  Tensor x;      // [B x H*W]
  LabelBatch y;  // B rows

  std::size_t rows() const { return y.rows; }
};

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices);

/// Scalar graph nodes: the batch-mean objective and its additive breakdown.
struct ObjectiveValue {
  Var total;
  std::vector<std::pair<std::string, Var>> terms;
};

enum class Modality { image, attrs };

/// E_q(z|.)[lambda log p(.|z)] - beta KL(q(z|.) || p(z)) with q the image
/// encoder or the attribute product of experts. With `frozen_likelihood`
/// the decoder is read through a stop-gradient.
ObjectiveValue elbo_uni(Graph& g, const JvaeModel& m, const Batch& b, Modality modality, double lambda, double beta,
                        std::size_t mc_samples, const Noise& noise, bool frozen_likelihood = false);

/// E_q(z|x,y)[lambda_x log p(x|z) + lambda_y log p(y|z)] - beta KL(q(z|x,y) || p(z)).
ObjectiveValue elbo_joint(Graph& g, const JvaeModel& m, const Batch& b, double lambda_x, double lambda_y, double beta,
                          std::size_t mc_samples, const Noise& noise);

ObjectiveValue telbo(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise);
ObjectiveValue jmvae(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise);
ObjectiveValue bivcca(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise);
/// Dispatches on cfg.kind.
ObjectiveValue objective(Graph& g, const JvaeModel& m, const Batch& b, const ObjectiveConfig& cfg, const Noise& noise);

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  /// A record is emitted every `log_every` steps holding the mean over them.
  std::size_t log_every = 100;
};

struct TrainRecord {
  std::size_t step = 0;  // steps completed
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::uint64_t seed = 0;
  std::size_t steps_requested = 0;
  std::size_t steps_completed = 0;
  double wall_seconds = 0.0;

  void write_jsonl(std::ostream& os) const;
};

/// Thrown when the objective or a gradient stops being finite. The model
/// keeps the parameters of the last completed step.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::size_t step) : NumericError(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

using RecordSink = std::function<void(const TrainRecord&)>;

/// Adam on shuffled minibatches of the train split. Attribute-decoder weight
/// decay enters as an l2 gradient term.
TrainLog train(JvaeModel& m, const Dataset& d, const ObjectiveConfig& obj, const TrainConfig& cfg,
               const RecordSink& sink = {});

struct JmvaeDecomposition {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_diff = 0.0;
  double std_error = 0.0;
  std::size_t groups = 0;
};

/// Compares the average KL(q(z|x_n, y_i) || q(z|y_i)) over a dataset with
/// its decomposition per distinct label y_i:
///   KL(q_avg(z|y_i) || q(z|y_i)) + log N_i - E_{q_avg}[H(n | z, y_i)],
/// q_avg the equal-weight mixture of the N_i joint posteriors. Groups with a
/// single image use the closed form, so they agree exactly.
JmvaeDecomposition verify_jmvae_decomposition(const JvaeModel& m, const Dataset& d, std::size_t mc_samples, Rng& rng);

}  // namespace imagine
