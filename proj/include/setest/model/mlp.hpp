#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "setest/model/common.hpp"
#include "setest/nn/adam.hpp"
#include "setest/nn/graph.hpp"
#include "setest/traj/observation.hpp"

namespace setest::model {

struct MlpConfig {
  std::size_t history = 5;  // H_mlp stacked frames
  std::size_t layers = 3;
  std::size_t width = 256;
  std::size_t d_obs = traj::kObsDim;
  std::size_t d_priv = traj::kPrivDim;

  std::size_t input_width() const { return history * d_obs; }

  void validate() const {
    if (history == 0) throw ContractError("MLP history must be >= 1");
    if (layers == 0) throw ContractError("MLP needs at least one hidden layer");
    if (width == 0 || d_obs == 0 || d_priv == 0) throw ContractError("MLP sizes must be positive");
  }

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct MlpModel {
  MlpConfig config;
  ParamStore params;

  static MlpModel create(const MlpConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    MlpModel m;
    m.config = cfg;
    Rng rng(splitmix64(seed ^ 0x4d4c50ULL));
    Standardizer::identity(cfg.d_obs, cfg.d_priv).add_to(m.params);
    std::size_t in = cfg.input_width();
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      m.params.add("fc" + std::to_string(l) + ".w", nn::init::linear_weight(in, cfg.width, rng));
      m.params.add("fc" + std::to_string(l) + ".b", Tensor::matrix(1, cfg.width));
      in = cfg.width;
    }
    m.params.add("head.w", Tensor::matrix(in, cfg.d_priv));
    m.params.add("head.b", Tensor::matrix(1, cfg.d_priv));
    return m;
  }
};

/// Stacks the last H_mlp raw frames ending at row `end` of `obs`, oldest
/// first. Frames before the episode start are zeros.
inline std::vector<double> stack_history(std::span<const double> obs, std::size_t end, const MlpConfig& cfg) {
  std::vector<double> out(cfg.input_width(), 0.0);
  for (std::size_t slot = 0; slot < cfg.history; ++slot) {
    const std::size_t back = cfg.history - 1 - slot;
    if (back > end) continue;
    const std::size_t row = end - back;
    std::copy_n(obs.begin() + static_cast<std::ptrdiff_t>(row * cfg.d_obs), cfg.d_obs,
                out.begin() + static_cast<std::ptrdiff_t>(slot * cfg.d_obs));
  }
  return out;
}

/// Graph for a batch of stacked raw inputs (rows x H_mlp*D_o); returns
/// normalized o' rows.
inline nn::NodeId mlp_forward_graph(nn::Graph& g, const MlpModel& m, std::span<const double> stacked) {
  const MlpConfig& cfg = m.config;
  const std::size_t w = cfg.input_width();
  if (stacked.empty() || stacked.size() % w != 0) {
    throw DimensionError("mlp_forward: input of " + std::to_string(stacked.size()) +
                         " values is not a positive multiple of H_mlp*D_o=" + std::to_string(w));
  }
  const Standardizer st = Standardizer::from(m.params);
  std::vector<double> x(stacked.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = (i % w) % cfg.d_obs;
    x[i] = (stacked[i] - st.o_mean[c]) / st.o_std[c];
  }
  nn::NodeId h = g.input(Tensor({stacked.size() / w, w}, std::move(x)));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = "fc" + std::to_string(l);
    h = g.gelu(g.linear(h, g.param(m.params, pre + ".w"), g.param(m.params, pre + ".b")));
  }
  return g.linear(h, g.param(m.params, "head.w"), g.param(m.params, "head.b"));
}

/// o' estimate (physical units) from one stacked input vector.
inline std::vector<double> mlp_forward(const MlpModel& m, std::span<const double> stacked) {
  if (stacked.size() != m.config.input_width()) {
    throw DimensionError("mlp_forward: expected " + std::to_string(m.config.input_width()) + " inputs, got " +
                         std::to_string(stacked.size()));
  }
  nn::Graph g(false);
  const Tensor& y = g.value(mlp_forward_graph(g, m, stacked));
  const Standardizer st = Standardizer::from(m.params);
  std::vector<double> out(m.config.d_priv);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y[i] * st.p_std[i] + st.p_mean[i];
  return out;
}

/// o' estimate for the last row of an observation history.
inline std::vector<double> mlp_predict(const MlpModel& m, std::span<const double> obs_history) {
  const MlpConfig& cfg = m.config;
  if (obs_history.empty() || obs_history.size() % cfg.d_obs != 0) {
    throw ContractError("mlp_predict: history must hold >= 1 observation of width " + std::to_string(cfg.d_obs));
  }
  return mlp_forward(m, stack_history(obs_history, obs_history.size() / cfg.d_obs - 1, cfg));
}

/// Predictions for every step of every trajectory (T x D_p rows each).
inline std::vector<std::vector<double>> mlp_predict_trajectories(const MlpModel& m,
                                                                 std::span<const traj::Trajectory> trajs) {
  const MlpConfig& cfg = m.config;
  if (cfg.d_obs != traj::kObsDim || cfg.d_priv != traj::kPrivDim) {
    throw DimensionError("model dims (" + std::to_string(cfg.d_obs) + ", " + std::to_string(cfg.d_priv) +
                         ") do not match data dims (" + std::to_string(traj::kObsDim) + ", " +
                         std::to_string(traj::kPrivDim) + ")");
  }
  const Standardizer st = Standardizer::from(m.params);
  std::vector<std::vector<double>> out;
  out.reserve(trajs.size());
  for (const auto& tr : trajs) {
    std::vector<double> stacked;
    stacked.reserve(tr.length() * cfg.input_width());
    for (std::size_t t = 0; t < tr.length(); ++t) {
      const auto row = stack_history(tr.obs, t, cfg);
      stacked.insert(stacked.end(), row.begin(), row.end());
    }
    nn::Graph g(false);
    const Tensor& y = g.value(mlp_forward_graph(g, m, stacked));
    std::vector<double> pred(y.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] = y[i] * st.p_std[i % cfg.d_priv] + st.p_mean[i % cfg.d_priv];
    }
    out.push_back(std::move(pred));
  }
  return out;
}

/// Trains the MLP with Adam on MSE of o'_t, sampling (trajectory, step)
/// uniformly.
inline std::pair<MlpModel, TrainResult> mlp_train(const traj::Dataset& data, const MlpConfig& cfg,
                                                  const TrainOptions& opt) {
  if (data.empty()) throw ContractError("mlp_train: dataset is empty");
  if (opt.batch == 0) throw ContractError("mlp_train: batch must be >= 1");
  MlpModel m = MlpModel::create(cfg, opt.seed);
  Standardizer::fit(data).store_into(m.params);
  const Standardizer st = Standardizer::from(m.params);
  WindowSampler sampler(data, cfg.history);
  Rng sample_rng(splitmix64(opt.seed ^ 0x73616d70ULL));
  nn::AdamState adam = nn::AdamState::for_params(m.params, opt.adam);
  TrainResult res;
  res.loss_trace.reserve(opt.iters);

  std::vector<double> inputs, target;
  for (std::size_t it = 0; it < opt.iters; ++it) {
    inputs.clear();
    target.clear();
    for (std::size_t b = 0; b < opt.batch; ++b) {
      const WindowRef ref = sampler.sample(sample_rng);
      const auto& tr = data[ref.traj];
      const auto row = stack_history(tr.obs, ref.end, cfg);
      inputs.insert(inputs.end(), row.begin(), row.end());
      standardize_rows(tr.p(ref.end), st.p_mean, st.p_std, target);
    }
    nn::Graph g;
    nn::NodeId pred = mlp_forward_graph(g, m, inputs);
    nn::NodeId loss = g.mse(pred, Tensor({opt.batch, cfg.d_priv}, target));
    const double lv = g.value(loss)[0];
    check_loss(lv, it);
    g.backward(loss);
    adam.hp.lr = scheduled_lr(opt, it);
    nn::adam_step(m.params, g.param_grads(m.params), adam);
    res.loss_trace.push_back(lv);
    if (opt.on_step) opt.on_step(it, lv);
  }
  return {std::move(m), std::move(res)};
}

}  // namespace setest::model
