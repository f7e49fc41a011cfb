#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Graph records primitive ops in execution order, so nodes are always
// topologically sorted. Parameters live in a ParamStore owned by the model;
// a Graph only reads them. Reading a parameter through `frozen()` inserts a
// stop-gradient: the value is used but no gradient ever reaches the
// parameter through that read.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "imagine/tensor.hpp"

namespace imagine {

/// Named, ordered collection of model parameters.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
    double weight_decay = 0.0;
  };

  std::size_t add(std::string name, Tensor value, bool trainable = true,
                  double weight_decay = 0.0);

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }

  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[index_of(name)].value; }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients aligned with a ParamStore; an empty tensor means "no gradient
/// reached this parameter".
using Gradients = std::vector<Tensor>;

/// Handle to a node in a Graph.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Graph {
 public:
  /// A single-coordinate offset applied to non-frozen reads of one
  /// parameter; finite-difference checks use it.
  struct Perturbation {
    std::size_t param = 0;
    std::size_t element = 0;
    double delta = 0.0;
  };

  explicit Graph(const ParamStore* params = nullptr,
                 std::optional<Perturbation> perturbation = std::nullopt);

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var input(Tensor value);
  Var param(const std::string& name);
  Var frozen(const std::string& name);
  Var stop_gradient(Var a);

  // Linear algebra.
  Var matmul(Var a, Var b);
  Var affine(Var x, Var w, Var b);

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var exp(Var a);
  Var log(Var a);
  Var reciprocal(Var a);
  Var elu(Var a);
  /// Values outside [lo, hi] are clamped and pass no gradient.
  Var clamp(Var a, double lo, double hi);

  // Shape.
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);

  // Reductions.
  Var row_sums(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);

  // Fused likelihood and divergence terms, each returning a [B x 1] column.
  /// Sum over columns of x log p + (1 - x) log(1 - p), p = sigmoid(logits)
  /// clamped to [1e-7, 1 - 1e-7].
  Var bernoulli_loglik(Var logits, Var targets);
  /// log softmax(logits)[label] per row; rows with a negative label give 0.
  Var categorical_loglik(Var logits, std::span<const int> labels);
  /// KL(N(mu_a, exp(lv_a)) || N(mu_b, exp(lv_b))) summed over columns.
  Var kl_diag(Var mu_a, Var lv_a, Var mu_b, Var lv_b);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(Var v) const { return nodes_.at(v.id).op; }

  /// Parameters read at least once without a stop-gradient.
  const std::vector<bool>& live_params() const { return live_params_; }

  /// Reverse pass from a scalar node. Returns gradients for the graph's
  /// ParamStore; frozen reads contribute exactly nothing.
  Gradients backward(Var loss);

  static constexpr double kProbClamp = 1e-7;

 private:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    const char* op = "";
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::ptrdiff_t param = -1;
    bool requires_grad = false;
  };

  Var push(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Node& node(Var v) const { return nodes_.at(v.id); }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
  Tensor& grad_slot(std::size_t id);
  void accumulate(std::size_t id, const Tensor& g);
  const Tensor& grad_of(std::size_t id) const { return grads_[id]; }
  void require_same_shape(Var a, Var b, const char* op) const;

  const ParamStore* params_;
  std::optional<Perturbation> perturbation_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> live_params_;
};

}  // namespace imagine
