#pragma once

#include <cstddef>
#include <vector>

#include "imagine/graph.hpp"

namespace imagine {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moments. Minimizes: `step` moves parameters
/// against the supplied gradients. Parameters that received no gradient are
/// treated as having a zero gradient.
class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig config = {});

  /// Throws NumericError naming the parameter if any gradient is non-finite;
  /// in that case no parameter is modified.
  void step(ParamStore& params, const Gradients& grads);

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace imagine
