#include "imagine/nn.hpp"

#include <cmath>

namespace imagine {

Mlp build_mlp(ParamStore& params, std::string prefix, std::vector<std::size_t> sizes,
              Activation activation, Rng& rng, double weight_decay) {
  if (sizes.size() < 2) throw InvalidArchitecture("MLP needs at least input and output sizes");
  for (std::size_t s : sizes) {
    if (s == 0) throw InvalidArchitecture("MLP layer sizes must be positive");
  }
  Mlp mlp{std::move(prefix), std::move(sizes), activation};
  for (std::size_t l = 0; l < mlp.layers(); ++l) {
    const std::size_t fan_in = mlp.sizes[l], fan_out = mlp.sizes[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-s, s);
    Tensor w = Tensor::matrix(fan_in, fan_out);
    for (double& v : w.values()) v = u(rng);
    params.add(mlp.weight(l), std::move(w), true, weight_decay);
    params.add(mlp.bias(l), Tensor::matrix(1, fan_out), true, 0.0);
  }
  return mlp;
}

Var mlp_forward(Graph& g, const Mlp& mlp, Var x, bool frozen) {
  Var h = x;
  for (std::size_t l = 0; l < mlp.layers(); ++l) {
    Var w = frozen ? g.frozen(mlp.weight(l)) : g.param(mlp.weight(l));
    Var b = frozen ? g.frozen(mlp.bias(l)) : g.param(mlp.bias(l));
    h = g.affine(h, w, b);
    if (l + 1 < mlp.layers() && mlp.activation == Activation::elu) h = g.elu(h);
  }
  return h;
}

}  // namespace imagine
