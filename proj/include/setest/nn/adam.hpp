#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "setest/nn/params.hpp"

namespace setest::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig hp;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamStore& params, AdamConfig hp = {}) {
    AdamState s;
    s.hp = hp;
    for (const auto& p : params) {
      s.m.emplace_back(p.value.shape(), 0.0);
      s.v.emplace_back(p.value.shape(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update over all trainable parameters.
///
/// Every gradient is checked for finiteness before any parameter is touched,
/// so a failed step leaves parameters and state unchanged. lr == 0 is
/// accepted and leaves parameters bit-identical.
inline void adam_step(ParamStore& params, std::span<const Tensor> grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  if (!(state.hp.lr >= 0.0)) throw ContractError("adam_step: learning rate must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() || state.m[i].shape() != params[i].value.shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter '" + params[i].name + "': " +
                           shape_string(params[i].value.shape()) + " vs gradient " +
                           shape_string(grads[i].shape()));
    }
    if (!params[i].trainable) continue;
    for (double g : grads[i].values()) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient for parameter '" + params[i].name + "'");
      }
    }
  }

  ++state.step;
  const auto& hp = state.hp;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    auto w = params[i].value.values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

}  // namespace setest::nn
