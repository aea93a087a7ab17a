#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "setest/nn/graph.hpp"

namespace setest::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t non_finite = 0;  // coordinates whose finite difference was not finite
  std::string worst;           // location of the largest error
};

/// |analytic - fd| / max(1e-8, |analytic| + |fd|)
inline double relative_error(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max(1e-8, std::abs(analytic) + std::abs(fd));
}

namespace detail {

inline void accumulate(GradCheckResult& r, double analytic, double fd, const std::string& where) {
  ++r.coordinates;
  if (!std::isfinite(fd) || !std::isfinite(analytic)) {
    ++r.non_finite;
    return;
  }
  const double e = relative_error(analytic, fd);
  if (e > r.max_rel_error) {
    r.max_rel_error = e;
    r.worst = where;
  }
}

}  // namespace detail

/// Builds a scalar function of one input tensor.
using InputFn = std::function<NodeId(Graph&, NodeId x)>;
/// Builds a scalar function of the parameters in a store.
using ParamFn = std::function<NodeId(Graph&)>;

/// Central-difference check of d f / d x at every coordinate of x.
inline GradCheckResult grad_check(const InputFn& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  Graph g;
  NodeId xi = g.variable(x);
  NodeId loss = f(g, xi);
  g.backward(loss);
  const Tensor analytic = g.grad(xi);

  auto eval = [&](const Tensor& at) {
    Graph h(false);
    NodeId n = f(h, h.input(at));
    return h.value(n)[0];
  };

  GradCheckResult r;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = eval(probe);
    probe[i] = orig - eps;
    const double fm = eval(probe);
    probe[i] = orig;
    detail::accumulate(r, analytic[i], (fp - fm) / (2.0 * eps), "x[" + std::to_string(i) + "]");
  }
  return r;
}

/// Central-difference check over every coordinate of every trainable parameter.
inline GradCheckResult grad_check_params(ParamStore& params, const ParamFn& f, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  std::vector<Tensor> analytic;
  {
    Graph g;
    NodeId loss = f(g);
    g.backward(loss);
    analytic = g.param_grads(params);
  }
  auto eval = [&]() {
    Graph h(false);
    NodeId n = f(h);
    return h.value(n)[0];
  };

  GradCheckResult r;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].trainable) continue;
    Tensor& w = params[p].value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double fp = eval();
      w[i] = orig - eps;
      const double fm = eval();
      w[i] = orig;
      detail::accumulate(r, analytic[p][i], (fp - fm) / (2.0 * eps),
                         params[p].name + "[" + std::to_string(i) + "]");
    }
  }
  return r;
}

}  // namespace setest::nn
