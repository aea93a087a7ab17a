#pragma once

#include <array>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "setest/errors.hpp"
#include "setest/model/common.hpp"
#include "setest/model/mlp.hpp"
#include "setest/model/set_model.hpp"
#include "setest/traj/generator.hpp"
#include "setest/traj/observation.hpp"
#include "setest/traj/oracle.hpp"

namespace setest {

using model::Mode;

/// Anything that maps observation histories to o' estimates.
///
/// predict() returns one T x 4 row block per trajectory. Rows for steps with
/// fewer than min_history() observations are NaN.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual std::string name() const = 0;
  virtual std::size_t min_history() const { return 1; }
  virtual std::vector<std::vector<double>> predict(std::span<const traj::Trajectory> trajs, Mode mode) const = 0;
};

class SetEstimator final : public Estimator {
 public:
  explicit SetEstimator(model::SetModel m, std::string name = "set") : m_(std::move(m)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<std::vector<double>> predict(std::span<const traj::Trajectory> trajs, Mode mode) const override {
    return model::set_predict_trajectories(m_, trajs, mode);
  }
  const model::SetModel& model() const { return m_; }

 private:
  model::SetModel m_;
  std::string name_;
};

/// The MLP has no o' input, so both modes give the same output.
class MlpEstimator final : public Estimator {
 public:
  explicit MlpEstimator(model::MlpModel m, std::string name = "mlp") : m_(std::move(m)), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<std::vector<double>> predict(std::span<const traj::Trajectory> trajs, Mode) const override {
    return model::mlp_predict_trajectories(m_, trajs);
  }

 private:
  model::MlpModel m_;
  std::string name_;
};

/// Analytic inversion of the generator; needs two frames to see motion.
class OracleEstimator final : public Estimator {
 public:
  explicit OracleEstimator(traj::GenParams gp = {}) : gp_(gp) {}
  std::string name() const override { return "oracle"; }
  std::size_t min_history() const override { return 2; }
  std::vector<std::vector<double>> predict(std::span<const traj::Trajectory> trajs, Mode) const override {
    std::vector<std::vector<double>> out;
    out.reserve(trajs.size());
    for (const auto& tr : trajs) {
      std::vector<double> rows(tr.length() * traj::kPrivDim, std::numeric_limits<double>::quiet_NaN());
      if (tr.length() >= 2) {
        const auto est = traj::oracle_privileged_all(tr.obs, tr.length(), gp_);
        for (std::size_t k = 0; k < est.size(); ++k) {
          std::copy(est[k].begin(), est[k].end(), rows.begin() + static_cast<std::ptrdiff_t>((k + 1) * traj::kPrivDim));
        }
      }
      out.push_back(std::move(rows));
    }
    return out;
  }

 private:
  traj::GenParams gp_;
};

/// Predicts the same o' at every step (zero and mean baselines).
class ConstantEstimator final : public Estimator {
 public:
  ConstantEstimator(std::array<double, traj::kPrivDim> value, std::string name)
      : value_(value), name_(std::move(name)) {}

  static ConstantEstimator zero() { return {{0.0, 0.0, 0.0, 0.0}, "zero"}; }

  /// Mean o' over every step of `data`.
  static ConstantEstimator mean_of(const traj::Dataset& data) {
    const auto st = model::Standardizer::fit(data);
    std::array<double, traj::kPrivDim> m{};
    std::copy(st.p_mean.begin(), st.p_mean.end(), m.begin());
    return {m, "mean"};
  }

  std::string name() const override { return name_; }
  std::vector<std::vector<double>> predict(std::span<const traj::Trajectory> trajs, Mode) const override {
    std::vector<std::vector<double>> out;
    out.reserve(trajs.size());
    for (const auto& tr : trajs) {
      std::vector<double> rows(tr.length() * traj::kPrivDim);
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = value_[i % traj::kPrivDim];
      out.push_back(std::move(rows));
    }
    return out;
  }

 private:
  std::array<double, traj::kPrivDim> value_;
  std::string name_;
};

/// Another estimator's output plus a fixed offset per o' channel.
class BiasedEstimator final : public Estimator {
 public:
  BiasedEstimator(std::shared_ptr<const Estimator> inner, std::array<double, traj::kPrivDim> bias)
      : inner_(std::move(inner)), bias_(bias) {
    if (!inner_) throw ContractError("BiasedEstimator needs an inner estimator");
  }
  std::string name() const override { return inner_->name() + "+bias"; }
  std::size_t min_history() const override { return inner_->min_history(); }
  std::vector<std::vector<double>> predict(std::span<const traj::Trajectory> trajs, Mode mode) const override {
    auto out = inner_->predict(trajs, mode);
    for (auto& rows : out) {
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] += bias_[i % traj::kPrivDim];
    }
    return out;
  }

 private:
  std::shared_ptr<const Estimator> inner_;
  std::array<double, traj::kPrivDim> bias_;
};

}  // namespace setest
