#include "imagine/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace imagine {

ForwardBackward forward_backward(const ParamStore& params, const GraphBuilder& build) {
  Graph g(&params);
  Var loss = build(g);
  ForwardBackward out;
  out.loss = g.scalar(loss);
  out.grads = g.backward(loss);
  return out;
}

GradCheckReport grad_check(const ParamStore& params, const GraphBuilder& build, double epsilon,
                           double floor) {
  Graph base(&params);
  Var loss = build(base);
  const Gradients grads = base.backward(loss);
  const std::vector<bool> live = base.live_params();

  auto evaluate = [&](std::size_t p, std::size_t e, double delta) {
    Graph g(&params, Graph::Perturbation{p, e, delta});
    return g.scalar(build(g));
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!live[p]) continue;
    const auto& entry = params.entry(p);
    for (std::size_t e = 0; e < entry.value.size(); ++e) {
      const double numeric = (evaluate(p, e, epsilon) - evaluate(p, e, -epsilon)) / (2.0 * epsilon);
      const double analytic = grads[p].size() ? grads[p][e] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coordinates;
      if (rel >= report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_param = entry.name;
        report.worst_element = e;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace imagine
