#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "setest/errors.hpp"
#include "setest/nn/adam.hpp"
#include "setest/nn/params.hpp"
#include "setest/rng.hpp"
#include "setest/traj/observation.hpp"

namespace setest::model {

using nn::ParamStore;
using nn::Tensor;

/// How past privileged tokens are filled during inference.
enum class Mode { teacher_forced, closed_loop };

inline std::string_view mode_name(Mode m) {
  return m == Mode::teacher_forced ? "teacher-forced" : "closed-loop";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "teacher-forced" || s == "teacher_forced") return Mode::teacher_forced;
  if (s == "closed-loop" || s == "closed_loop") return Mode::closed_loop;
  throw ContractError("unknown mode '" + std::string(s) + "'");
}

/// Per-channel mean and standard deviation of o and o' over a dataset.
/// Channels with (near) zero spread get unit scale.
struct Standardizer {
  std::vector<double> o_mean, o_std, p_mean, p_std;

  static Standardizer identity(std::size_t d_obs, std::size_t d_priv) {
    return {std::vector<double>(d_obs, 0.0), std::vector<double>(d_obs, 1.0),
            std::vector<double>(d_priv, 0.0), std::vector<double>(d_priv, 1.0)};
  }

  static Standardizer fit(const traj::Dataset& data) {
    auto st = identity(traj::kObsDim, traj::kPrivDim);
    auto moments = [&](auto rows_of, std::size_t dim, std::vector<double>& mean, std::vector<double>& sd) {
      std::vector<double> s(dim, 0.0), s2(dim, 0.0);
      double n = 0.0;
      for (const auto& tr : data) {
        const std::vector<double>& rows = rows_of(tr);
        for (std::size_t i = 0; i < rows.size(); ++i) s[i % dim] += rows[i];
        n += static_cast<double>(tr.length());
      }
      if (n == 0.0) return;
      for (std::size_t c = 0; c < dim; ++c) mean[c] = s[c] / n;
      for (const auto& tr : data) {
        const std::vector<double>& rows = rows_of(tr);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const double d = rows[i] - mean[i % dim];
          s2[i % dim] += d * d;
        }
      }
      for (std::size_t c = 0; c < dim; ++c) {
        const double v = std::sqrt(s2[c] / n);
        sd[c] = v > 1e-8 ? v : 1.0;
      }
    };
    moments([](const traj::Trajectory& t) -> const std::vector<double>& { return t.obs; }, traj::kObsDim,
            st.o_mean, st.o_std);
    moments([](const traj::Trajectory& t) -> const std::vector<double>& { return t.priv; }, traj::kPrivDim,
            st.p_mean, st.p_std);
    return st;
  }

  /// Registers the statistics as frozen parameters so they travel with checkpoints.
  void add_to(ParamStore& params) const {
    params.add("norm.o_mean", Tensor::row(o_mean), false);
    params.add("norm.o_std", Tensor::row(o_std), false);
    params.add("norm.p_mean", Tensor::row(p_mean), false);
    params.add("norm.p_std", Tensor::row(p_std), false);
  }

  static Standardizer from(const ParamStore& params) {
    auto vec = [&](const char* name) {
      auto v = params.value(name).values();
      return std::vector<double>(v.begin(), v.end());
    };
    return {vec("norm.o_mean"), vec("norm.o_std"), vec("norm.p_mean"), vec("norm.p_std")};
  }

  void store_into(ParamStore& params) const {
    auto put = [&](const char* name, const std::vector<double>& v) {
      Tensor& t = params.value(name);
      if (t.size() != v.size()) throw DimensionError(std::string("normalizer size mismatch for ") + name);
      std::copy(v.begin(), v.end(), t.values().begin());
    };
    put("norm.o_mean", o_mean);
    put("norm.o_std", o_std);
    put("norm.p_mean", p_mean);
    put("norm.p_std", p_std);
  }
};

/// Appends (rows x dim) values standardized with (mean, sd) to `out`.
inline void standardize_rows(std::span<const double> rows, const std::vector<double>& mean,
                             const std::vector<double>& sd, std::vector<double>& out) {
  const std::size_t dim = mean.size();
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back((rows[i] - mean[i % dim]) / sd[i % dim]);
}

/// A training window: steps [end + 1 - length, end] of trajectory `traj`.
struct WindowRef {
  std::size_t traj = 0;
  std::size_t end = 0;
  std::size_t length = 0;
  std::size_t start() const { return end + 1 - length; }
};

/// Draws window end points uniformly over all (trajectory, step) pairs.
/// Windows near the episode start are shorter than the context length.
class WindowSampler {
 public:
  WindowSampler(const traj::Dataset& data, std::size_t context) : context_(context) {
    if (data.empty()) throw ContractError("training dataset is empty");
    if (context == 0) throw ContractError("context length must be >= 1");
    offsets_.reserve(data.size() + 1);
    offsets_.push_back(0);
    for (const auto& tr : data) {
      if (tr.length() == 0) throw ContractError("trajectory of length 0 in training data");
      offsets_.push_back(offsets_.back() + tr.length());
    }
  }

  std::size_t total() const { return offsets_.back(); }

  WindowRef sample(Rng& rng) const {
    const std::size_t flat = static_cast<std::size_t>(rng.below(total()));
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
    const std::size_t traj = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    const std::size_t end = flat - offsets_[traj];
    return {traj, end, std::min(context_, end + 1)};
  }

 private:
  std::size_t context_;
  std::vector<std::size_t> offsets_;
};

struct TrainOptions {
  std::size_t iters = 5000;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  nn::AdamConfig adam{};
  /// Linearly anneal the learning rate to zero over the run.
  bool lr_decay = false;
  /// Called after every iteration with (iteration, loss).
  std::function<void(std::size_t, double)> on_step;
};

struct TrainResult {
  std::vector<double> loss_trace;
};

/// Learning rate for iteration `it` of `opt.iters`.
inline double scheduled_lr(const TrainOptions& opt, std::size_t it) {
  if (!opt.lr_decay || opt.iters == 0) return opt.adam.lr;
  return opt.adam.lr * (1.0 - static_cast<double>(it) / static_cast<double>(opt.iters));
}

inline void check_loss(double loss, std::size_t iter) {
  if (!std::isfinite(loss)) {
    throw TrainingError("non-finite loss at iteration " + std::to_string(iter));
  }
}

}  // namespace setest::model
