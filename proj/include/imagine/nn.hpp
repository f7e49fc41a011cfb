#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "imagine/graph.hpp"
#include "imagine/random.hpp"

namespace imagine {

class InvalidArchitecture : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Activation { elu, none };

/// A stack of affine layers `sizes[0] -> sizes[1] -> ... -> sizes.back()`
/// whose parameters live in a ParamStore under `prefix`. The activation is
/// applied between layers, never after the last one.
struct Mlp {
  std::string prefix;
  std::vector<std::size_t> sizes;
  Activation activation = Activation::elu;

  std::size_t layers() const { return sizes.size() - 1; }
  std::size_t in() const { return sizes.front(); }
  std::size_t out() const { return sizes.back(); }
  std::string weight(std::size_t layer) const { return prefix + "/W" + std::to_string(layer); }
  std::string bias(std::size_t layer) const { return prefix + "/b" + std::to_string(layer); }
};

/// Validates the layer sizes and registers Glorot-uniform weights
/// (s = sqrt(6 / (fan_in + fan_out))) and zero biases.
Mlp build_mlp(ParamStore& params, std::string prefix, std::vector<std::size_t> sizes,
              Activation activation, Rng& rng, double weight_decay = 0.0);

/// Applies the MLP. With `frozen`, every parameter read is a stop-gradient.
Var mlp_forward(Graph& g, const Mlp& mlp, Var x, bool frozen = false);

}  // namespace imagine
