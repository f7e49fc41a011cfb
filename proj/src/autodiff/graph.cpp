#include "imagine/graph.hpp"

#include <algorithm>
#include <cmath>

#include "imagine/kernels.hpp"

namespace imagine {

std::size_t ParamStore::add(std::string name, Tensor value, bool trainable, double weight_decay) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const std::size_t i = entries_.size();
  index_.emplace(name, i);
  entries_.push_back({std::move(name), std::move(value), trainable, weight_decay});
  return i;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

Graph::Graph(const ParamStore* params, std::optional<Perturbation> perturbation)
    : params_(params), perturbation_(perturbation) {
  if (params_) live_params_.assign(params_->size(), false);
  nodes_.reserve(256);
}

Var Graph::push(const char* op, Tensor value, std::vector<std::size_t> inputs,
                BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value at node ") + std::to_string(nodes_.size()) +
                       " (" + op + ")");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  for (std::size_t in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void Graph::require_same_shape(Var a, Var b, const char* op) const {
  if (!node(a).value.same_shape(node(b).value)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + node(a).value.shape_string() +
                         " vs " + node(b).value.shape_string());
  }
}

double Graph::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw DimensionError("scalar() on tensor " + t.shape_string());
  return t[0];
}

Tensor& Graph::grad_slot(std::size_t id) {
  Tensor& g = grads_[id];
  if (g.size() == 0) g = Tensor(nodes_[id].value.shape(), 0.0);
  return g;
}

void Graph::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grads_[id];
  if (slot.size() == 0) {
    slot = g;
    return;
  }
  double* s = slot.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < slot.size(); ++i) s[i] += src[i];
}

// ---------------------------------------------------------------- leaves

Var Graph::input(Tensor value) { return push("input", std::move(value), {}, nullptr); }

Var Graph::param(const std::string& name) {
  if (!params_) throw std::logic_error("graph has no parameter store");
  const std::size_t idx = params_->index_of(name);
  const auto& entry = params_->entry(idx);
  Tensor v = entry.value;
  if (perturbation_ && perturbation_->param == idx) v[perturbation_->element] += perturbation_->delta;
  Var out = push("param", std::move(v), {}, nullptr);
  Node& n = nodes_.back();
  n.param = static_cast<std::ptrdiff_t>(idx);
  n.requires_grad = entry.trainable;
  if (entry.trainable) live_params_[idx] = true;
  return out;
}

Var Graph::frozen(const std::string& name) {
  if (!params_) throw std::logic_error("graph has no parameter store");
  return push("frozen", params_->value(name), {}, nullptr);
}

Var Graph::stop_gradient(Var a) {
  Var out = push("stop_gradient", node(a).value, {a.id}, nullptr);
  nodes_.back().requires_grad = false;
  nodes_.back().backward = nullptr;
  return out;
}

// ---------------------------------------------------------- linear algebra

Var Graph::matmul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + av.shape_string() + " x " + bv.shape_string());
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  kernels::gemm_nn(kernels::view(av), kernels::view(bv), kernels::view(out));
  return push("matmul", std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const Tensor& go = g.grads_[self];
    const Tensor& av = g.nodes_[n.inputs[0]].value;
    const Tensor& bv = g.nodes_[n.inputs[1]].value;
    if (g.needs(n.inputs[0])) {
      Tensor ga = Tensor::matrix(av.rows(), av.cols());
      kernels::gemm_nt(kernels::view(go), kernels::view(bv), kernels::view(ga));
      g.accumulate(n.inputs[0], ga);
    }
    if (g.needs(n.inputs[1])) {
      Tensor gb = Tensor::matrix(bv.rows(), bv.cols());
      kernels::gemm_tn(kernels::view(av), kernels::view(go), kernels::view(gb));
      g.accumulate(n.inputs[1], gb);
    }
  });
}

Var Graph::affine(Var x, Var w, Var b) {
  const Tensor& xv = node(x).value;
  const Tensor& wv = node(w).value;
  const Tensor& bv = node(b).value;
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw DimensionError("affine: x " + xv.shape_string() + ", W " + wv.shape_string() + ", b " +
                         bv.shape_string());
  }
  Tensor out = Tensor::matrix(xv.rows(), wv.cols());
  kernels::affine(kernels::view(xv), kernels::view(wv), kernels::view(bv), kernels::view(out));
  return push("affine", std::move(out), {x.id, w.id, b.id}, [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const Tensor& go = g.grads_[self];
    const Tensor& xv = g.nodes_[n.inputs[0]].value;
    const Tensor& wv = g.nodes_[n.inputs[1]].value;
    if (g.needs(n.inputs[0])) {
      Tensor gx = Tensor::matrix(xv.rows(), xv.cols());
      kernels::gemm_nt(kernels::view(go), kernels::view(wv), kernels::view(gx));
      g.accumulate(n.inputs[0], gx);
    }
    if (g.needs(n.inputs[1])) {
      Tensor gw = Tensor::matrix(wv.rows(), wv.cols());
      kernels::gemm_tn(kernels::view(xv), kernels::view(go), kernels::view(gw));
      g.accumulate(n.inputs[1], gw);
    }
    if (g.needs(n.inputs[2])) {
      Tensor gb = Tensor::matrix(1, wv.cols());
      kernels::column_sums(kernels::view(go), kernels::view(gb));
      g.accumulate(n.inputs[2], gb);
    }
  });
}

// ------------------------------------------------------------- elementwise

namespace {

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

Var Graph::add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return push("add", zip(node(a).value, node(b).value, std::plus<>()), {a.id, b.id},
              [](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                g.accumulate(n.inputs[0], g.grads_[self]);
                g.accumulate(n.inputs[1], g.grads_[self]);
              });
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return push("sub", zip(node(a).value, node(b).value, std::minus<>()), {a.id, b.id},
              [](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                g.accumulate(n.inputs[0], g.grads_[self]);
                if (g.needs(n.inputs[1])) g.accumulate(n.inputs[1], map(g.grads_[self], std::negate<>()));
              });
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  return push("mul", zip(node(a).value, node(b).value, std::multiplies<>()), {a.id, b.id},
              [](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const Tensor& go = g.grads_[self];
                const Tensor& av = g.nodes_[n.inputs[0]].value;
                const Tensor& bv = g.nodes_[n.inputs[1]].value;
                if (g.needs(n.inputs[0])) g.accumulate(n.inputs[0], zip(go, bv, std::multiplies<>()));
                if (g.needs(n.inputs[1])) g.accumulate(n.inputs[1], zip(go, av, std::multiplies<>()));
              });
}

Var Graph::scale(Var a, double c) {
  return push("scale", map(node(a).value, [c](double v) { return c * v; }), {a.id},
              [c](Graph& g, std::size_t self) {
                g.accumulate(g.nodes_[self].inputs[0],
                             map(g.grads_[self], [c](double v) { return c * v; }));
              });
}

Var Graph::add_scalar(Var a, double c) {
  return push("add_scalar", map(node(a).value, [c](double v) { return v + c; }), {a.id},
              [](Graph& g, std::size_t self) {
                g.accumulate(g.nodes_[self].inputs[0], g.grads_[self]);
              });
}

Var Graph::exp(Var a) {
  return push("exp", map(node(a).value, [](double v) { return std::exp(v); }), {a.id},
              [](Graph& g, std::size_t self) {
                g.accumulate(g.nodes_[self].inputs[0],
                             zip(g.grads_[self], g.nodes_[self].value, std::multiplies<>()));
              });
}

Var Graph::log(Var a) {
  return push("log", map(node(a).value, [](double v) { return std::log(v); }), {a.id},
              [](Graph& g, std::size_t self) {
                const std::size_t in = g.nodes_[self].inputs[0];
                g.accumulate(in, zip(g.grads_[self], g.nodes_[in].value,
                                     [](double go, double x) { return go / x; }));
              });
}

Var Graph::reciprocal(Var a) {
  return push("reciprocal", map(node(a).value, [](double v) { return 1.0 / v; }), {a.id},
              [](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                g.accumulate(n.inputs[0], zip(g.grads_[self], n.value,
                                              [](double go, double r) { return -go * r * r; }));
              });
}

Var Graph::elu(Var a) {
  const Tensor& av = node(a).value;
  Tensor out(av.shape());
  kernels::elu(av.data(), out.data(), av.size());
  return push("elu", std::move(out), {a.id}, [](Graph& g, std::size_t self) {
    const std::size_t in = g.nodes_[self].inputs[0];
    const Tensor& x = g.nodes_[in].value;
    Tensor gi(x.shape());
    kernels::elu_backward(x.data(), g.grads_[self].data(), gi.data(), x.size());
    g.accumulate(in, gi);
  });
}

Var Graph::clamp(Var a, double lo, double hi) {
  return push("clamp", map(node(a).value, [lo, hi](double v) { return std::clamp(v, lo, hi); }),
              {a.id}, [lo, hi](Graph& g, std::size_t self) {
                const std::size_t in = g.nodes_[self].inputs[0];
                g.accumulate(in, zip(g.grads_[self], g.nodes_[in].value, [lo, hi](double go, double x) {
                               return (x < lo || x > hi) ? 0.0 : go;
                             }));
              });
}

// ------------------------------------------------------------------- shape

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = node(parts[0]).value.rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    if (node(p).value.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    cols += node(p).value.cols();
    ids.push_back(p.id);
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = node(p).value;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + offset);
    }
    offset += pv.cols();
  }
  return push("concat_cols", std::move(out), std::move(ids), [](Graph& g, std::size_t self) {
    const Node& n = g.nodes_[self];
    const Tensor& go = g.grads_[self];
    std::size_t offset = 0;
    for (std::size_t in : n.inputs) {
      const Tensor& pv = g.nodes_[in].value;
      if (g.needs(in)) {
        Tensor gi = Tensor::matrix(pv.rows(), pv.cols());
        for (std::size_t r = 0; r < pv.rows(); ++r) {
          auto src = go.row(r).subspan(offset, pv.cols());
          std::copy(src.begin(), src.end(), gi.row(r).begin());
        }
        g.accumulate(in, gi);
      }
      offset += pv.cols();
    }
  });
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = node(a).value;
  if (begin >= end || end > av.cols()) throw DimensionError("slice_cols: bad range");
  Tensor out = Tensor::matrix(av.rows(), end - begin);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto src = av.row(r).subspan(begin, end - begin);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return push("slice_cols", std::move(out), {a.id}, [begin](Graph& g, std::size_t self) {
    const std::size_t in = g.nodes_[self].inputs[0];
    const Tensor& go = g.grads_[self];
    Tensor& slot = g.grad_slot(in);
    for (std::size_t r = 0; r < go.rows(); ++r) {
      for (std::size_t c = 0; c < go.cols(); ++c) slot.at(r, begin + c) += go.at(r, c);
    }
  });
}

// -------------------------------------------------------------- reductions

Var Graph::row_sums(Var a) {
  const Tensor& av = node(a).value;
  Tensor out = Tensor::matrix(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v;
    out[r] = s;
  }
  return push("row_sums", std::move(out), {a.id}, [](Graph& g, std::size_t self) {
    const std::size_t in = g.nodes_[self].inputs[0];
    const Tensor& go = g.grads_[self];
    const Tensor& av = g.nodes_[in].value;
    Tensor gi(av.shape());
    for (std::size_t r = 0; r < av.rows(); ++r) {
      for (double& v : gi.row(r)) v = go[r];
    }
    g.accumulate(in, gi);
  });
}

Var Graph::sum_all(Var a) {
  double s = 0.0;
  for (double v : node(a).value.values()) s += v;
  return push("sum_all", Tensor::scalar(s), {a.id}, [](Graph& g, std::size_t self) {
    const std::size_t in = g.nodes_[self].inputs[0];
    g.accumulate(in, Tensor(g.nodes_[in].value.shape(), g.grads_[self][0]));
  });
}

Var Graph::mean_all(Var a) {
  const Tensor& av = node(a).value;
  const double inv = 1.0 / static_cast<double>(av.size());
  double s = 0.0;
  for (double v : av.values()) s += v;
  return push("mean_all", Tensor::scalar(s * inv), {a.id}, [inv](Graph& g, std::size_t self) {
    const std::size_t in = g.nodes_[self].inputs[0];
    g.accumulate(in, Tensor(g.nodes_[in].value.shape(), g.grads_[self][0] * inv));
  });
}

// ------------------------------------------------------------ fused terms

Var Graph::bernoulli_loglik(Var logits, Var targets) {
  require_same_shape(logits, targets, "bernoulli_loglik");
  const Tensor& lv = node(logits).value;
  const Tensor& tv = node(targets).value;
  Tensor out = Tensor::matrix(lv.rows(), 1);
  kernels::bernoulli_loglik_rows(kernels::view(lv), kernels::view(tv), kProbClamp, out.data());
  return push("bernoulli_loglik", std::move(out), {logits.id, targets.id},
              [](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const Tensor& go = g.grads_[self];
                const Tensor& lv = g.nodes_[n.inputs[0]].value;
                const Tensor& tv = g.nodes_[n.inputs[1]].value;
                const std::size_t cols = lv.cols();
                if (g.needs(n.inputs[0])) {
                  Tensor gl(lv.shape());
                  for (std::size_t r = 0; r < lv.rows(); ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double p = 1.0 / (1.0 + std::exp(-lv.at(r, c)));
                      // The clamp is flat outside its range.
                      const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
                      gl.at(r, c) = clamped ? 0.0 : go[r] * (tv.at(r, c) - p);
                    }
                  }
                  g.accumulate(n.inputs[0], gl);
                }
                if (g.needs(n.inputs[1])) {
                  Tensor gt(tv.shape());
                  for (std::size_t r = 0; r < lv.rows(); ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      double p = 1.0 / (1.0 + std::exp(-lv.at(r, c)));
                      p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
                      gt.at(r, c) = go[r] * (std::log(p) - std::log1p(-p));
                    }
                  }
                  g.accumulate(n.inputs[1], gt);
                }
              });
}

Var Graph::categorical_loglik(Var logits, std::span<const int> labels) {
  const Tensor& lv = node(logits).value;
  if (labels.size() != lv.rows()) throw DimensionError("categorical_loglik: label count mismatch");
  const std::size_t k = lv.cols();
  Tensor probs(lv.shape());
  Tensor out = Tensor::matrix(lv.rows(), 1);
  std::vector<int> lab(labels.begin(), labels.end());
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    const auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < k; ++c) probs.at(r, c) = std::exp(row[c] - lse);
    if (lab[r] >= 0) {
      if (static_cast<std::size_t>(lab[r]) >= k) throw DimensionError("categorical_loglik: label out of range");
      out[r] = row[static_cast<std::size_t>(lab[r])] - lse;
    }
  }
  return push("categorical_loglik", std::move(out), {logits.id},
              [probs = std::move(probs), lab = std::move(lab)](Graph& g, std::size_t self) {
                const std::size_t in = g.nodes_[self].inputs[0];
                const Tensor& go = g.grads_[self];
                Tensor gi(probs.shape());
                for (std::size_t r = 0; r < probs.rows(); ++r) {
                  if (lab[r] < 0) continue;
                  for (std::size_t c = 0; c < probs.cols(); ++c) {
                    const double onehot = static_cast<int>(c) == lab[r] ? 1.0 : 0.0;
                    gi.at(r, c) = go[r] * (onehot - probs.at(r, c));
                  }
                }
                g.accumulate(in, gi);
              });
}

Var Graph::kl_diag(Var mu_a, Var lv_a, Var mu_b, Var lv_b) {
  require_same_shape(mu_a, lv_a, "kl_diag");
  require_same_shape(mu_a, mu_b, "kl_diag");
  require_same_shape(mu_a, lv_b, "kl_diag");
  const Tensor& ma = node(mu_a).value;
  const Tensor& la = node(lv_a).value;
  const Tensor& mb = node(mu_b).value;
  const Tensor& lb = node(lv_b).value;
  Tensor out = Tensor::matrix(ma.rows(), 1);
  for (std::size_t r = 0; r < ma.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < ma.cols(); ++c) {
      const double d = ma.at(r, c) - mb.at(r, c);
      s += 0.5 * (lb.at(r, c) - la.at(r, c)) +
           (std::exp(la.at(r, c)) + d * d) / (2.0 * std::exp(lb.at(r, c))) - 0.5;
    }
    out[r] = s;
  }
  return push("kl_diag", std::move(out), {mu_a.id, lv_a.id, mu_b.id, lv_b.id},
              [](Graph& g, std::size_t self) {
                const Node& n = g.nodes_[self];
                const Tensor& go = g.grads_[self];
                const Tensor& ma = g.nodes_[n.inputs[0]].value;
                const Tensor& la = g.nodes_[n.inputs[1]].value;
                const Tensor& mb = g.nodes_[n.inputs[2]].value;
                const Tensor& lb = g.nodes_[n.inputs[3]].value;
                Tensor gma(ma.shape()), gla(ma.shape()), gmb(ma.shape()), glb(ma.shape());
                for (std::size_t r = 0; r < ma.rows(); ++r) {
                  for (std::size_t c = 0; c < ma.cols(); ++c) {
                    const double vb = std::exp(lb.at(r, c));
                    const double va = std::exp(la.at(r, c));
                    const double d = ma.at(r, c) - mb.at(r, c);
                    gma.at(r, c) = go[r] * d / vb;
                    gmb.at(r, c) = -go[r] * d / vb;
                    gla.at(r, c) = go[r] * (-0.5 + 0.5 * va / vb);
                    glb.at(r, c) = go[r] * (0.5 - 0.5 * (va + d * d) / vb);
                  }
                }
                g.accumulate(n.inputs[0], gma);
                g.accumulate(n.inputs[1], gla);
                g.accumulate(n.inputs[2], gmb);
                g.accumulate(n.inputs[3], glb);
              });
}

// ---------------------------------------------------------------- backward

Gradients Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw DimensionError("backward: loss must be scalar");
  grads_.assign(nodes_.size(), Tensor());
  Gradients out(params_ ? params_->size() : 0);
  if (!nodes_[loss.id].requires_grad) return out;
  grads_[loss.id] = Tensor(value(loss).shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (grads_[i].size() == 0 || !n.requires_grad) continue;
    if (n.param >= 0) {
      Tensor& slot = out[static_cast<std::size_t>(n.param)];
      if (slot.size() == 0) {
        slot = std::move(grads_[i]);
      } else {
        for (std::size_t j = 0; j < slot.size(); ++j) slot[j] += grads_[i][j];
      }
      continue;
    }
    if (n.backward) n.backward(*this, i);
    grads_[i] = Tensor();
  }
  return out;
}

}  // namespace imagine
