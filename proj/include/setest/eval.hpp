#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <exception>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "setest/errors.hpp"
#include "setest/estimator.hpp"
#include "setest/model/set_model.hpp"
#include "setest/rng.hpp"
#include "setest/traj/observation.hpp"

namespace setest::eval {

using Rms = std::array<double, traj::kPrivDim>;

/// Per-dimension root-mean-square error of row-major N x 4 predictions.
inline Rms rms_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("rms_error: " + std::to_string(pred.size()) + " predicted values vs " +
                         std::to_string(truth.size()) + " true values");
  }
  if (pred.empty() || pred.size() % traj::kPrivDim != 0) {
    throw DimensionError("rms_error: need N >= 1 rows of " + std::to_string(traj::kPrivDim) + " values");
  }
  Rms sum{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    sum[i % traj::kPrivDim] += d * d;
  }
  const double n = static_cast<double>(pred.size() / traj::kPrivDim);
  for (double& s : sum) s = std::sqrt(s / n);
  return sum;
}

struct EvalReport {
  std::string model;
  std::string dataset;
  Mode mode = Mode::teacher_forced;
  Rms rms{};
  std::size_t trials = 0;  // trajectories
  std::size_t steps = 0;   // scored steps over all trajectories
};

namespace detail {

struct SquaredError {
  Rms sum{};
  std::size_t steps = 0;
};

inline SquaredError score(const traj::Trajectory& tr, std::span<const double> pred, std::size_t min_history) {
  if (pred.size() != tr.priv.size()) {
    throw DimensionError("estimator returned " + std::to_string(pred.size()) + " values for a trajectory with " +
                         std::to_string(tr.priv.size()));
  }
  SquaredError e;
  for (std::size_t t = min_history - 1; t < tr.length(); ++t) {
    for (std::size_t d = 0; d < traj::kPrivDim; ++d) {
      const double diff = pred[t * traj::kPrivDim + d] - tr.p(t)[d];
      e.sum[d] += diff * diff;
    }
    ++e.steps;
  }
  return e;
}

}  // namespace detail

/// RMS over every step with at least min_history() observations, pooled over
/// all trajectories. Trajectories are split across `workers` threads; partial
/// sums are reduced in trajectory order, so the report does not depend on the
/// worker count.
inline EvalReport evaluate(const Estimator& est, std::span<const traj::Trajectory> data, Mode mode,
                           std::string dataset_id = "data", unsigned workers = 1) {
  if (data.empty()) throw ContractError("evaluate: dataset is empty");
  const std::size_t mh = std::max<std::size_t>(1, est.min_history());
  std::vector<detail::SquaredError> parts(data.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    const auto pred = est.predict(data.subspan(begin, end - begin), mode);
    for (std::size_t i = begin; i < end; ++i) parts[i] = detail::score(data[i], pred[i - begin], mh);
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(data.size())));
  if (workers == 1) {
    run(0, data.size());
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (data.size() + workers - 1) / workers;
      for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = std::min(data.size(), w * chunk), e = std::min(data.size(), b + chunk);
        pool.emplace_back([&, w, b, e] {
          try {
            if (b < e) run(b, e);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  EvalReport r;
  r.model = est.name();
  r.dataset = std::move(dataset_id);
  r.mode = mode;
  r.trials = data.size();
  Rms total{};
  for (const auto& p : parts) {
    for (std::size_t d = 0; d < traj::kPrivDim; ++d) total[d] += p.sum[d];
    r.steps += p.steps;
  }
  if (r.steps == 0) throw ContractError("evaluate: no trajectory is long enough for " + est.name());
  for (std::size_t d = 0; d < traj::kPrivDim; ++d) r.rms[d] = std::sqrt(total[d] / static_cast<double>(r.steps));
  return r;
}

inline double mean_of(const Rms& r) { return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size()); }

/// Rows are evaluation tasks, columns training sets; every cell holds the
/// four per-dimension RMS values.
struct TransferMatrix {
  std::vector<std::string> train_sets;
  std::vector<std::string> eval_tasks;
  std::vector<std::vector<Rms>> cells;  // [eval][train]

  const Rms& cell(std::size_t eval, std::size_t train) const { return cells.at(eval).at(train); }

  std::size_t column(const std::string& train_set) const {
    const auto it = std::find(train_sets.begin(), train_sets.end(), train_set);
    if (it == train_sets.end()) throw ContractError("no training set '" + train_set + "' in transfer matrix");
    return static_cast<std::size_t>(it - train_sets.begin());
  }

  /// Mean RMS over cells whose training set has the evaluation task's name
  /// (diagonal) and over cells of other per-task training sets
  /// (off-diagonal). Columns not named after an evaluation task are ignored.
  std::pair<double, double> diagonal_vs_off_diagonal() const {
    double diag = 0.0, off = 0.0;
    std::size_t nd = 0, no = 0;
    for (std::size_t e = 0; e < eval_tasks.size(); ++e) {
      for (std::size_t t = 0; t < train_sets.size(); ++t) {
        if (std::find(eval_tasks.begin(), eval_tasks.end(), train_sets[t]) == eval_tasks.end()) continue;
        if (train_sets[t] == eval_tasks[e]) {
          diag += mean_of(cells[e][t]);
          ++nd;
        } else {
          off += mean_of(cells[e][t]);
          ++no;
        }
      }
    }
    if (nd == 0 || no == 0) throw ContractError("transfer matrix has no per-task diagonal/off-diagonal cells");
    return {diag / static_cast<double>(nd), off / static_cast<double>(no)};
  }
};

struct NamedEstimator {
  std::string train_set;
  std::shared_ptr<const Estimator> estimator;
};

struct NamedDataset {
  std::string task;
  traj::Dataset data;
};

/// Every model on every evaluation dataset. All models see the same
/// evaluation trajectories.
inline TransferMatrix transfer_matrix(std::span<const NamedEstimator> models, std::span<const NamedDataset> datasets,
                                      Mode mode = Mode::teacher_forced, unsigned workers = 1) {
  if (models.empty() || datasets.empty()) throw ContractError("transfer_matrix needs models and datasets");
  TransferMatrix m;
  for (const auto& mod : models) {
    if (!mod.estimator) throw ContractError("transfer_matrix: missing estimator for '" + mod.train_set + "'");
    m.train_sets.push_back(mod.train_set);
  }
  for (const auto& ds : datasets) m.eval_tasks.push_back(ds.task);
  m.cells.assign(datasets.size(), std::vector<Rms>(models.size()));
  for (std::size_t e = 0; e < datasets.size(); ++e) {
    for (std::size_t t = 0; t < models.size(); ++t) {
      m.cells[e][t] = evaluate(*models[t].estimator, datasets[e].data, mode, datasets[e].task, workers).rms;
    }
  }
  return m;
}

enum class AblationKind { context, dataset_size };

inline std::string_view ablation_name(AblationKind k) {
  return k == AblationKind::context ? "context" : "dataset-size";
}

inline AblationKind parse_ablation(std::string_view s) {
  if (s == "context") return AblationKind::context;
  if (s == "dataset-size" || s == "dataset_size") return AblationKind::dataset_size;
  throw ContractError("unknown ablation '" + std::string(s) + "' (expected context or dataset-size)");
}

struct AblationRow {
  std::string variant;  // "H=20" / "H=1" or "full" / "tenth"
  std::uint64_t seed = 0;
  Rms rms{};
};

struct AblationReport {
  AblationKind kind = AblationKind::context;
  std::vector<AblationRow> rows;  // base variant then reduced variant, per seed

  /// Rows of one variant in seed order.
  std::vector<AblationRow> variant(const std::string& name) const {
    std::vector<AblationRow> out;
    for (const auto& r : rows) {
      if (r.variant == name) out.push_back(r);
    }
    return out;
  }
};

/// Seeded subset of ceil(n / 10) trajectories, kept in original order.
inline traj::Dataset tenth_subsample(const traj::Dataset& data, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(splitmix64(seed ^ 0x73756273ULL));
  const std::size_t k = (data.size() + 9) / 10;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  traj::Dataset out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

/// Trains the base SET configuration and its ablated variant on identical
/// data for every seed and scores both teacher-forced on `test`.
inline AblationReport run_ablation(AblationKind kind, const traj::Dataset& train, const traj::Dataset& test,
                                   const model::SetConfig& base, const model::TrainOptions& opt,
                                   std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ContractError("run_ablation needs at least one seed");
  AblationReport rep;
  rep.kind = kind;
  for (std::uint64_t seed : seeds) {
    model::TrainOptions o = opt;
    o.seed = seed;
    auto score = [&](const traj::Dataset& data, const model::SetConfig& cfg, std::string variant) {
      SetEstimator est(model::set_train(data, cfg, o).first);
      rep.rows.push_back({std::move(variant), seed, evaluate(est, test, Mode::teacher_forced).rms});
    };
    if (kind == AblationKind::context) {
      model::SetConfig h1 = base;
      h1.context = 1;
      score(train, base, "H=" + std::to_string(base.context));
      score(train, h1, "H=1");
    } else {
      score(train, base, "full");
      score(tenth_subsample(train, seed), base, "tenth");
    }
  }
  return rep;
}

}  // namespace setest::eval
