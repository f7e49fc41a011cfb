#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "imagine/graph.hpp"

namespace imagine {

/// Builds a scalar-valued graph. Must be deterministic: every call with the
/// same parameter values has to produce the same loss (capture RNG seeds,
/// not generators).
using GraphBuilder = std::function<Var(Graph&)>;

struct ForwardBackward {
  double loss = 0.0;
  Gradients grads;
};

ForwardBackward forward_backward(const ParamStore& params, const GraphBuilder& build);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients with central differences for every coordinate
/// of every parameter that the graph reads without a stop-gradient.
/// Perturbations are applied to those reads only, so frozen reads see the
/// unperturbed value, matching stop-gradient semantics.
///
/// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
/// coordinates whose true gradient is zero from dividing rounding noise by
/// zero.
GradCheckReport grad_check(const ParamStore& params, const GraphBuilder& build,
                           double epsilon = 1e-5, double floor = 1e-6);

}  // namespace imagine
