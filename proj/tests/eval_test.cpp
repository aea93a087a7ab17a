#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "setest/eval.hpp"
#include "setest/traj/generator.hpp"

using namespace setest;
using namespace setest::eval;
using traj::Task;

namespace {

traj::GenParams short_noiseless(std::size_t T = 120) {
  traj::GenParams gp;
  gp.noise = traj::NoiseParams::none();
  gp.traj_len = T;
  return gp;
}

traj::Dataset task_data(Task task, std::size_t n, std::uint64_t seed, const traj::GenParams& gp) {
  return traj::gen_dataset(n, traj::Mixture{{task, 1.0}}, seed, gp);
}

model::SetConfig tiny_set(std::size_t context) {
  model::SetConfig c;
  c.context = context;
  c.n_blocks = 1;
  c.n_heads = 2;
  c.d_model = 8;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST(RmsError, WorkedValues) {
  const std::vector<double> truth{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_EQ(rms_error(truth, truth), (Rms{0, 0, 0, 0}));
  std::vector<double> off = truth;
  off[0] += 1.0;
  off[4] -= 1.0;
  EXPECT_EQ(rms_error(off, truth), (Rms{1, 0, 0, 0}));
  std::vector<double> e = truth;
  e[2] += 3.0;
  e[6] += 4.0;
  EXPECT_NEAR(rms_error(e, truth)[2], 3.5355339059327378, 1e-12);
}

TEST(RmsError, RejectsBadShapes) {
  const std::vector<double> a(8, 0.0), b(4, 0.0), c(6, 0.0);
  EXPECT_THROW(rms_error(a, b), DimensionError);
  EXPECT_THROW(rms_error(c, c), DimensionError);
  EXPECT_THROW(rms_error(std::vector<double>{}, std::vector<double>{}), DimensionError);
}

TEST(RmsError, PermutationInvariant) {
  Rng rng(1);
  std::vector<double> p(40), t(40);
  for (auto& x : p) x = rng.normal();
  for (auto& x : t) x = rng.normal();
  const Rms base = rms_error(p, t);
  for (int trial = 0; trial < 20; ++trial) {
    // swap two whole rows in both arrays
    const std::size_t i = rng.below(10), j = rng.below(10);
    for (std::size_t d = 0; d < 4; ++d) {
      std::swap(p[i * 4 + d], p[j * 4 + d]);
      std::swap(t[i * 4 + d], t[j * 4 + d]);
    }
    const Rms r = rms_error(p, t);
    for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(r[d], base[d], 1e-12);
  }
}

TEST(Evaluate, OracleIsExactOnNoiselessData) {
  const auto gp = short_noiseless();
  for (Task task : traj::kAllTasks) {
    const auto ds = task_data(task, 6, 3, gp);
    const auto r = evaluate(OracleEstimator(gp), ds, Mode::teacher_forced, std::string(traj::task_name(task)));
    for (double v : r.rms) EXPECT_LT(v, 1e-6) << traj::task_name(task);
    EXPECT_EQ(r.trials, 6u);
    EXPECT_EQ(r.steps, 6u * 119u);  // first step lacks history
  }
}

TEST(Evaluate, ZeroEstimatorGivesRootMeanSquareOfTruth) {
  const auto gp = short_noiseless();
  const auto ds = task_data(Task::backflip, 5, 4, gp);
  Rms ref{};
  std::size_t n = 0;
  for (const auto& tr : ds) {
    for (std::size_t t = 0; t < tr.length(); ++t, ++n) {
      for (std::size_t d = 0; d < 4; ++d) ref[d] += tr.p(t)[d] * tr.p(t)[d];
    }
  }
  const auto r = evaluate(ConstantEstimator::zero(), ds, Mode::closed_loop);
  for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(r.rms[d], std::sqrt(ref[d] / static_cast<double>(n)), 1e-12);
  EXPECT_EQ(r.model, "zero");
  EXPECT_EQ(r.mode, Mode::closed_loop);
}

TEST(Evaluate, MeanAndBiasedBaselines) {
  const auto gp = short_noiseless();
  const auto ds = task_data(Task::jump, 4, 5, gp);
  const auto mean = ConstantEstimator::mean_of(ds);
  const auto pred = mean.predict(ds, Mode::teacher_forced);
  // mean predictor is the RMS-optimal constant: the residual RMS is the std
  const auto r = evaluate(mean, ds, Mode::teacher_forced);
  const auto shifted = BiasedEstimator(std::make_shared<ConstantEstimator>(mean), {0.1, -0.1, 0.05, 0.0});
  const auto rs = evaluate(shifted, ds, Mode::teacher_forced);
  for (std::size_t d = 0; d < 3; ++d) EXPECT_GT(rs.rms[d], r.rms[d]);
  EXPECT_NEAR(rs.rms[3], r.rms[3], 1e-15);
  EXPECT_EQ(shifted.name(), "mean+bias");
}

TEST(Evaluate, DeterministicAndIndependentOfWorkers) {
  const auto gp = short_noiseless(60);
  const auto ds = traj::gen_dataset(9, traj::uniform_mixture(traj::kJumpTasks), 6, gp);
  const SetEstimator est(model::SetModel::create(tiny_set(4), 3));
  const auto a = evaluate(est, ds, Mode::closed_loop, "d", 1);
  const auto b = evaluate(est, ds, Mode::closed_loop, "d", 1);
  const auto c = evaluate(est, ds, Mode::closed_loop, "d", 4);
  EXPECT_EQ(a.rms, b.rms);
  EXPECT_EQ(a.rms, c.rms);
  EXPECT_THROW(evaluate(est, traj::Dataset{}, Mode::closed_loop), ContractError);
}

TEST(Transfer, GridDiagonalAndOracleColumns) {
  const auto gp = short_noiseless(80);
  std::vector<NamedDataset> sets;
  for (Task t : traj::kJumpTasks) sets.push_back({std::string(traj::task_name(t)), task_data(t, 3, 7, gp)});
  auto oracle = std::make_shared<OracleEstimator>(gp);
  std::vector<NamedEstimator> models;
  for (const auto& s : sets) models.push_back({s.task, oracle});
  models.push_back({"all", oracle});
  const auto m = transfer_matrix(models, sets);
  ASSERT_EQ(m.cells.size(), 3u);
  ASSERT_EQ(m.cells[0].size(), 4u);
  for (const auto& row : m.cells) {
    for (const auto& cell : row) {
      for (double v : cell) EXPECT_LT(v, 1e-6);
    }
  }
  // diagonal cell is a plain evaluation
  std::vector<NamedEstimator> zeros;
  auto zero = std::make_shared<ConstantEstimator>(ConstantEstimator::zero());
  for (const auto& s : sets) zeros.push_back({s.task, zero});
  const auto z = transfer_matrix(zeros, sets);
  EXPECT_EQ(z.cell(1, 1), evaluate(*zero, sets[1].data, Mode::teacher_forced).rms);
  EXPECT_EQ(z.column("sideflip"), 2u);
  EXPECT_THROW(z.column("walk"), ContractError);
}

TEST(Transfer, DiagonalVersusOffDiagonalMeans) {
  TransferMatrix m;
  m.train_sets = {"a", "b", "all"};
  m.eval_tasks = {"a", "b"};
  m.cells = {{Rms{1, 1, 1, 1}, Rms{3, 3, 3, 3}, Rms{9, 9, 9, 9}}, {Rms{5, 5, 5, 5}, Rms{2, 2, 2, 2}, Rms{9, 9, 9, 9}}};
  const auto [diag, off] = m.diagonal_vs_off_diagonal();
  EXPECT_EQ(diag, 1.5);
  EXPECT_EQ(off, 4.0);
}

TEST(Ablation, TenthSubsample) {
  const auto gp = short_noiseless(20);
  const auto ds = task_data(Task::jump, 25, 8, gp);
  const auto a = tenth_subsample(ds, 1);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a, tenth_subsample(ds, 1));
  std::vector<std::ptrdiff_t> pos;
  for (const auto& tr : a) {
    const auto it = std::find(ds.begin(), ds.end(), tr);
    ASSERT_NE(it, ds.end());
    pos.push_back(it - ds.begin());
  }
  EXPECT_TRUE(std::is_sorted(pos.begin(), pos.end()));
  EXPECT_EQ(std::adjacent_find(pos.begin(), pos.end()), pos.end());
  EXPECT_NE(a, tenth_subsample(ds, 2));
}

TEST(Ablation, ReportsPairedRowsPerSeed) {
  const auto gp = short_noiseless(30);
  const auto train = task_data(Task::jump, 20, 9, gp);
  const auto test = task_data(Task::jump, 4, 10, gp);
  model::TrainOptions opt;
  opt.iters = 3;
  opt.batch = 4;
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto ctx = run_ablation(AblationKind::context, train, test, tiny_set(6), opt, seeds);
  ASSERT_EQ(ctx.rows.size(), 4u);
  EXPECT_EQ(ctx.rows[0].variant, "H=6");
  EXPECT_EQ(ctx.rows[1].variant, "H=1");
  EXPECT_EQ(ctx.rows[3].seed, 1u);
  EXPECT_EQ(ctx.variant("H=1").size(), 2u);
  const auto size = run_ablation(AblationKind::dataset_size, train, test, tiny_set(6), opt, seeds);
  EXPECT_EQ(size.rows[0].variant, "full");
  EXPECT_EQ(size.rows[1].variant, "tenth");
  // the full-data variant is the same run in both ablations
  EXPECT_EQ(size.rows[0].rms, ctx.rows[0].rms);
  EXPECT_EQ(parse_ablation("dataset-size"), AblationKind::dataset_size);
  EXPECT_THROW(parse_ablation("width"), ContractError);
}
