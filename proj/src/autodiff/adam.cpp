#include "imagine/adam.hpp"

#include <cmath>

namespace imagine {

Adam::Adam(const ParamStore& params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& e : params) {
    m_.emplace_back(e.value.shape(), 0.0);
    v_.emplace_back(e.value.shape(), 0.0);
  }
}

void Adam::step(ParamStore& params, const Gradients& grads) {
  if (grads.size() != params.size()) throw DimensionError("adam: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() == 0) continue;
    if (!grads[i].same_shape(params.entry(i).value)) {
      throw DimensionError("adam: gradient shape mismatch for " + params.entry(i).name);
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adam: non-finite gradient for parameter " + params.entry(i).name +
                         " at step " + std::to_string(step_ + 1));
    }
  }

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params.entry(i);
    if (!e.trainable) continue;
    double* p = e.value.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const bool has_grad = grads[i].size() != 0;
    const double* g = has_grad ? grads[i].data() : nullptr;
    for (std::size_t j = 0; j < e.value.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace imagine
