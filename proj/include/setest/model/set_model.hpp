#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "setest/model/common.hpp"
#include "setest/nn/adam.hpp"
#include "setest/nn/graph.hpp"
#include "setest/nn/params.hpp"
#include "setest/traj/observation.hpp"

namespace setest::model {

using nn::Graph;
using nn::NodeId;
using nn::RowRef;
using nn::Segment;

struct SetConfig {
  std::size_t context = 20;  // H, number of (o, o') pairs
  std::size_t n_blocks = 6;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  double dropout = 0.1;
  std::size_t max_episode_len = 1000;
  std::size_t d_obs = traj::kObsDim;
  std::size_t d_priv = traj::kPrivDim;

  void validate() const {
    if (context == 0) throw ContractError("SET context length must be >= 1");
    if (n_blocks == 0 || n_heads == 0 || d_model == 0) throw ContractError("SET sizes must be positive");
    if (d_model % n_heads != 0) {
      throw DimensionError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                           std::to_string(n_heads));
    }
    if (d_obs == 0 || d_priv == 0 || max_episode_len == 0) throw ContractError("SET dims must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must be in [0, 1)");
  }

  friend bool operator==(const SetConfig&, const SetConfig&) = default;
};

struct SetModel {
  SetConfig config;
  ParamStore params;

  /// Fresh model with seeded initial weights and identity normalization.
  static SetModel create(const SetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SetModel m;
    m.config = cfg;
    Rng rng(splitmix64(seed ^ 0x5345544dULL));
    const std::size_t d = cfg.d_model;
    auto& p = m.params;
    Standardizer::identity(cfg.d_obs, cfg.d_priv).add_to(p);
    auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
      p.add(name + ".w", nn::init::linear_weight(in, out, rng));
      p.add(name + ".b", Tensor::matrix(1, out));
    };
    auto norm = [&](const std::string& name) {
      p.add(name + ".g", Tensor::matrix(1, d, 1.0));
      p.add(name + ".b", Tensor::matrix(1, d));
    };
    linear("embed_o", cfg.d_obs, d);
    linear("embed_p", cfg.d_priv, d);
    p.add("embed_t", nn::init::embedding(cfg.max_episode_len, d, rng));
    norm("ln_embed");
    for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
      const std::string pre = "block" + std::to_string(b) + ".";
      norm(pre + "ln1");
      linear(pre + "attn.q", d, d);
      linear(pre + "attn.k", d, d);
      linear(pre + "attn.v", d, d);
      linear(pre + "attn.proj", d, d);
      norm(pre + "ln2");
      linear(pre + "mlp.fc", d, 4 * d);
      linear(pre + "mlp.proj", 4 * d, d);
    }
    norm("ln_f");
    // zero read-out: an untrained model predicts the training-set mean
    p.add("head.w", Tensor::matrix(d, cfg.d_priv));
    p.add("head.b", Tensor::matrix(1, cfg.d_priv));
    return m;
  }
};

/// Raw (unnormalized) rows of one context window. `priv` holds either one
/// row per observation (the trailing o' token is present) or one fewer.
struct SetWindow {
  std::span<const double> obs;
  std::span<const double> priv;
  std::size_t t0 = 0;  // episode timestep of the first row
};

/// Embedded tokens of a batch of windows laid out back to back.
struct TokenStream {
  NodeId tokens = 0;
  std::vector<std::size_t> timestep;  // per token
  std::vector<bool> is_obs;           // per token: o token or o' token
  std::vector<Segment> segments;      // one per window
  std::vector<std::size_t> obs_rows;  // token index of every o token, in order
};

namespace detail {

inline NodeId linear(Graph& g, const ParamStore& p, NodeId x, const std::string& name) {
  return g.linear(x, g.param(p, name + ".w"), g.param(p, name + ".b"));
}

inline NodeId layer_norm(Graph& g, const ParamStore& p, NodeId x, const std::string& name) {
  return g.layer_norm(x, g.param(p, name + ".g"), g.param(p, name + ".b"));
}

}  // namespace detail

/// Embeds o and o' rows, adds the shared per-timestep embedding to both
/// tokens of a pair, interleaves them as (o_1, o'_1, o_2, o'_2, ...) and
/// layer-normalizes every token. `dropout_rng` enables training dropout.
inline TokenStream tokenize_window(Graph& g, const SetModel& m, std::span<const SetWindow> windows,
                                   Rng* dropout_rng = nullptr) {
  const SetConfig& cfg = m.config;
  if (windows.empty()) throw ContractError("tokenize_window: no windows");
  const Standardizer st = Standardizer::from(m.params);
  std::vector<double> o_rows, p_rows;
  std::vector<RowRef> layout;
  TokenStream ts;
  std::size_t n_o = 0, n_p = 0;
  for (const auto& w : windows) {
    if (w.obs.empty() || w.obs.size() % cfg.d_obs != 0) {
      throw DimensionError("window observation block of " + std::to_string(w.obs.size()) +
                           " values is not a positive multiple of D_o=" + std::to_string(cfg.d_obs));
    }
    const std::size_t n = w.obs.size() / cfg.d_obs;
    if (w.priv.size() % cfg.d_priv != 0) {
      throw DimensionError("window privileged block is not a multiple of D_p=" + std::to_string(cfg.d_priv));
    }
    const std::size_t np = w.priv.size() / cfg.d_priv;
    if (n > cfg.context) {
      throw ContractError("window of " + std::to_string(n) + " steps exceeds context " +
                          std::to_string(cfg.context));
    }
    if (np != n && np + 1 != n) throw ContractError("window needs n or n-1 privileged rows");
    if (w.t0 + n > cfg.max_episode_len) {
      throw RangeError("timestep " + std::to_string(w.t0 + n - 1) + " >= max_episode_len " +
                       std::to_string(cfg.max_episode_len));
    }
    standardize_rows(w.obs, st.o_mean, st.o_std, o_rows);
    standardize_rows(w.priv, st.p_mean, st.p_std, p_rows);
    const std::size_t first = ts.timestep.size();
    for (std::size_t i = 0; i < n; ++i) {
      ts.obs_rows.push_back(ts.timestep.size());
      ts.timestep.push_back(w.t0 + i);
      ts.is_obs.push_back(true);
      layout.push_back({0, n_o + i});
      if (i < np) {
        ts.timestep.push_back(w.t0 + i);
        ts.is_obs.push_back(false);
        layout.push_back({1, n_p + i});
      }
    }
    ts.segments.push_back({first, ts.timestep.size() - first});
    n_o += n;
    n_p += np;
  }

  NodeId eo = detail::linear(g, m.params, g.input(Tensor({n_o, cfg.d_obs}, std::move(o_rows))), "embed_o");
  std::vector<NodeId> parts{eo};
  if (n_p > 0) {
    parts.push_back(
        detail::linear(g, m.params, g.input(Tensor({n_p, cfg.d_priv}, std::move(p_rows))), "embed_p"));
  }
  NodeId x = g.assemble_rows(std::move(parts), std::move(layout));
  x = g.add(x, g.gather_rows(g.param(m.params, "embed_t"), ts.timestep));
  x = detail::layer_norm(g, m.params, x, "ln_embed");
  if (dropout_rng) x = g.dropout(x, cfg.dropout, *dropout_rng);
  ts.tokens = x;
  return ts;
}

/// Multi-head causal self-attention of block `block` on already normalized
/// tokens: per-head softmax(q k^T / sqrt(d_k)) v over each segment's prefix,
/// heads concatenated and projected.
inline NodeId causal_self_attention(Graph& g, const SetModel& m, std::size_t block, NodeId x,
                                    const std::vector<Segment>& segments) {
  const std::string pre = "block" + std::to_string(block) + ".attn.";
  NodeId q = detail::linear(g, m.params, x, pre + "q");
  NodeId k = detail::linear(g, m.params, x, pre + "k");
  NodeId v = detail::linear(g, m.params, x, pre + "v");
  NodeId z = g.causal_attention(q, k, v, segments, m.config.n_heads);
  return detail::linear(g, m.params, z, pre + "proj");
}

/// Runs the decoder stack and returns normalized o' predictions, one row per
/// o token (read at that token), in window order.
inline NodeId set_forward(Graph& g, const SetModel& m, std::span<const SetWindow> windows,
                          Rng* dropout_rng = nullptr) {
  const SetConfig& cfg = m.config;
  TokenStream ts = tokenize_window(g, m, windows, dropout_rng);
  NodeId x = ts.tokens;
  auto drop = [&](NodeId y) { return dropout_rng ? g.dropout(y, cfg.dropout, *dropout_rng) : y; };
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    NodeId a = causal_self_attention(g, m, b, detail::layer_norm(g, m.params, x, pre + "ln1"), ts.segments);
    x = g.add(x, drop(a));
    NodeId h = detail::layer_norm(g, m.params, x, pre + "ln2");
    h = g.gelu(detail::linear(g, m.params, h, pre + "mlp.fc"));
    h = detail::linear(g, m.params, h, pre + "mlp.proj");
    x = g.add(x, drop(h));
  }
  x = detail::layer_norm(g, m.params, x, "ln_f");
  std::vector<RowRef> picks;
  picks.reserve(ts.obs_rows.size());
  for (std::size_t r : ts.obs_rows) picks.push_back({0, r});
  x = g.assemble_rows({x}, std::move(picks));
  return detail::linear(g, m.params, x, "head");
}

/// Maps normalized prediction rows back to physical units.
inline std::vector<double> denormalize(const SetModel& m, const Tensor& pred) {
  const Standardizer st = Standardizer::from(m.params);
  std::vector<double> out(pred.size());
  const std::size_t dp = m.config.d_priv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pred[i] * st.p_std[i % dp] + st.p_mean[i % dp];
  return out;
}

/// o' estimate for the last step of `obs_history` (n rows, n >= 1), given the
/// n-1 privileged rows that precede it (ground truth or earlier estimates).
/// Only the most recent H steps are used.
inline std::vector<double> set_predict(const SetModel& m, std::span<const double> obs_history,
                                       std::span<const double> priv_context, std::size_t t0 = 0) {
  const SetConfig& cfg = m.config;
  if (obs_history.empty()) throw ContractError("set_predict: empty observation history");
  if (obs_history.size() % cfg.d_obs != 0) {
    throw DimensionError("set_predict: history width does not match D_o=" + std::to_string(cfg.d_obs));
  }
  const std::size_t n = obs_history.size() / cfg.d_obs;
  if (priv_context.size() != (n - 1) * cfg.d_priv) {
    throw DimensionError("set_predict: expected " + std::to_string(n - 1) + " privileged rows");
  }
  const std::size_t keep = std::min(n, cfg.context);
  const std::size_t skip = n - keep;
  SetWindow w{obs_history.subspan(skip * cfg.d_obs), priv_context.subspan(skip * cfg.d_priv), t0 + skip};
  Graph g(false);
  NodeId out = set_forward(g, m, std::span(&w, 1));
  auto all = denormalize(m, g.value(out));
  return {all.end() - static_cast<std::ptrdiff_t>(cfg.d_priv), all.end()};
}

/// Predictions for every step of every trajectory, as T x D_p rows per
/// trajectory. Windows are batched `chunk` at a time. In closed-loop mode
/// all trajectories advance one step at a time and each feeds back its own
/// earlier estimates.
inline std::vector<std::vector<double>> set_predict_trajectories(const SetModel& m,
                                                                 std::span<const traj::Trajectory> trajs,
                                                                 Mode mode, std::size_t chunk = 32) {
  const SetConfig& cfg = m.config;
  if (cfg.d_obs != traj::kObsDim || cfg.d_priv != traj::kPrivDim) {
    throw DimensionError("model dims (" + std::to_string(cfg.d_obs) + ", " + std::to_string(cfg.d_priv) +
                         ") do not match data dims (" + std::to_string(traj::kObsDim) + ", " +
                         std::to_string(traj::kPrivDim) + ")");
  }
  std::vector<std::vector<double>> out(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) out[i].assign(trajs[i].length() * cfg.d_priv, 0.0);

  struct Job {
    std::size_t traj, end;
  };
  auto run = [&](const std::vector<Job>& jobs) {
    std::vector<SetWindow> windows;
    windows.reserve(jobs.size());
    for (const auto& j : jobs) {
      const std::size_t len = std::min(cfg.context, j.end + 1);
      const std::size_t s = j.end + 1 - len;
      const auto& tr = trajs[j.traj];
      std::span<const double> priv_src =
          mode == Mode::teacher_forced ? std::span<const double>(tr.priv) : std::span<const double>(out[j.traj]);
      windows.push_back({std::span(tr.obs).subspan(s * cfg.d_obs, len * cfg.d_obs),
                         priv_src.subspan(s * cfg.d_priv, (len - 1) * cfg.d_priv), s});
    }
    Graph g(false);
    NodeId pred = set_forward(g, m, windows);
    const auto vals = denormalize(m, g.value(pred));
    // the last row of each window is its prediction
    std::size_t row = 0;
    for (std::size_t w = 0; w < jobs.size(); ++w) {
      row += windows[w].obs.size() / cfg.d_obs;
      std::copy_n(vals.begin() + static_cast<std::ptrdiff_t>((row - 1) * cfg.d_priv), cfg.d_priv,
                  out[jobs[w].traj].begin() + static_cast<std::ptrdiff_t>(jobs[w].end * cfg.d_priv));
    }
  };

  std::vector<Job> pending;
  if (mode == Mode::teacher_forced) {
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      for (std::size_t t = 0; t < trajs[i].length(); ++t) {
        pending.push_back({i, t});
        if (pending.size() == chunk) {
          run(pending);
          pending.clear();
        }
      }
    }
    if (!pending.empty()) run(pending);
  } else {
    std::size_t longest = 0;
    for (const auto& tr : trajs) longest = std::max(longest, tr.length());
    for (std::size_t t = 0; t < longest; ++t) {
      for (std::size_t i = 0; i < trajs.size(); ++i) {
        if (t >= trajs[i].length()) continue;
        pending.push_back({i, t});
        if (pending.size() == chunk) {
          run(pending);
          pending.clear();
        }
      }
      if (!pending.empty()) run(pending);
      pending.clear();
    }
  }
  return out;
}

/// Trains a SET estimator with Adam on MSE over every window position.
/// Normalization statistics are fitted to `data` first.
inline std::pair<SetModel, TrainResult> set_train(const traj::Dataset& data, const SetConfig& cfg,
                                                  const TrainOptions& opt) {
  if (data.empty()) throw ContractError("set_train: dataset is empty");
  if (opt.batch == 0) throw ContractError("set_train: batch must be >= 1");
  SetModel m = SetModel::create(cfg, opt.seed);
  Standardizer::fit(data).store_into(m.params);
  const Standardizer st = Standardizer::from(m.params);
  for (const auto& tr : data) {
    if (tr.length() > cfg.max_episode_len) {
      throw RangeError("trajectory of length " + std::to_string(tr.length()) + " exceeds max_episode_len");
    }
  }

  WindowSampler sampler(data, cfg.context);
  Rng sample_rng(splitmix64(opt.seed ^ 0x73616d70ULL));
  Rng dropout_rng(splitmix64(opt.seed ^ 0x64726f70ULL));
  nn::AdamState adam = nn::AdamState::for_params(m.params, opt.adam);
  TrainResult res;
  res.loss_trace.reserve(opt.iters);

  std::vector<SetWindow> windows(opt.batch);
  std::vector<double> target;
  for (std::size_t it = 0; it < opt.iters; ++it) {
    target.clear();
    std::size_t rows = 0;
    for (auto& w : windows) {
      const WindowRef ref = sampler.sample(sample_rng);
      const auto& tr = data[ref.traj];
      const std::size_t s = ref.start();
      w = {std::span(tr.obs).subspan(s * cfg.d_obs, ref.length * cfg.d_obs),
           std::span(tr.priv).subspan(s * cfg.d_priv, (ref.length - 1) * cfg.d_priv), s};
      standardize_rows(std::span(tr.priv).subspan(s * cfg.d_priv, ref.length * cfg.d_priv), st.p_mean,
                       st.p_std, target);
      rows += ref.length;
    }
    Graph g;
    NodeId pred = set_forward(g, m, windows, cfg.dropout > 0.0 ? &dropout_rng : nullptr);
    NodeId loss = g.mse(pred, Tensor({rows, cfg.d_priv}, target));
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
