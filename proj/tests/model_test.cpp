#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "setest/model/mlp.hpp"
#include "setest/model/set_model.hpp"
#include "setest/nn/gradcheck.hpp"
#include "setest/traj/generator.hpp"

using namespace setest;
using namespace setest::model;
using setest::nn::Graph;
using setest::nn::NodeId;

namespace {

SetConfig tiny_set(std::size_t context = 4) {
  SetConfig c;
  c.context = context;
  c.n_blocks = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.dropout = 0.0;
  c.max_episode_len = 64;
  return c;
}

MlpConfig tiny_mlp() {
  MlpConfig c;
  c.history = 3;
  c.layers = 3;
  c.width = 16;
  return c;
}

std::vector<double> random_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal();
  return v;
}

void zero_all(ParamStore& p) {
  for (auto& prm : p) {
    if (prm.trainable) prm.value.fill(0.0);
  }
}

traj::Dataset constant_priv_dataset(std::size_t n, double c, std::size_t T = 30) {
  traj::GenParams gp;
  gp.traj_len = T;
  auto ds = traj::gen_dataset(n, traj::Mixture{{traj::Task::walk, 1.0}}, 5, gp);
  for (auto& tr : ds) std::fill(tr.priv.begin(), tr.priv.end(), c);
  return ds;
}

// Fresh models read out through a zero head; tests that need outputs to
// depend on the inputs give it random weights.
template <class M>
M with_random_head(M m) {
  Rng rng(99);
  for (auto& v : m.params.value("head.w").values()) v = rng.normal();
  return m;
}

std::vector<double> predict_rows(const SetModel& m, const std::vector<SetWindow>& w) {
  Graph g(false);
  const auto& v = g.value(set_forward(g, m, w)).values();
  return {v.begin(), v.end()};
}

}  // namespace

TEST(SetConfig, Validation) {
  SetConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), DimensionError);
  c = SetConfig{};
  c.context = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(SetModel, DefaultParameterNamesAndHead) {
  const auto m = SetModel::create(SetConfig{}, 0);
  EXPECT_TRUE(m.params.find("block5.mlp.proj.w").has_value());
  EXPECT_FALSE(m.params.find("block6.ln1.g").has_value());
  EXPECT_EQ(m.params.value("head.w").cols(), traj::kPrivDim);
  EXPECT_EQ(m.params.value("block0.mlp.fc.w").cols(), 4 * 128u);
  EXPECT_EQ(m.params.value("embed_t").rows(), 1000u);
  EXPECT_FALSE(m.params[m.params.index("norm.o_mean")].trainable);
}

TEST(Tokenize, InterleavesPairsWithSharedTimesteps) {
  const auto m = SetModel::create(tiny_set(), 1);
  Rng rng(1);
  const auto o = random_rows(2, traj::kObsDim, rng);
  const auto p = random_rows(2, traj::kPrivDim, rng);
  Graph g(false);
  SetWindow w{o, p, 7};
  const auto ts = tokenize_window(g, m, std::span(&w, 1));
  EXPECT_EQ(g.value(ts.tokens).rows(), 4u);
  EXPECT_EQ(ts.is_obs, (std::vector<bool>{true, false, true, false}));
  EXPECT_EQ(ts.timestep, (std::vector<std::size_t>{7, 7, 8, 8}));
  EXPECT_EQ(ts.obs_rows, (std::vector<std::size_t>{0, 2}));
  // every token is layer-normalized with unit gain and zero shift
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0;
    for (double x : g.value(ts.tokens).row_span(r)) mean += x;
    EXPECT_NEAR(mean / 8.0, 0.0, 1e-12);
  }
}

TEST(Tokenize, SinglePairAndEpisodeStart) {
  const auto m = SetModel::create(SetConfig{}, 1);
  Rng rng(2);
  const auto o = random_rows(1, traj::kObsDim, rng);
  const auto p = random_rows(1, traj::kPrivDim, rng);
  Graph g(false);
  SetWindow pair{o, p, 0};
  EXPECT_EQ(g.value(tokenize_window(g, m, std::span(&pair, 1)).tokens).rows(), 2u);
  SetWindow start{o, {}, 0};
  const auto ts = tokenize_window(g, m, std::span(&start, 1));
  EXPECT_EQ(g.value(ts.tokens).rows(), 1u);
}

TEST(Tokenize, RejectsBadWindows) {
  const auto m = SetModel::create(tiny_set(4), 1);
  Rng rng(3);
  const auto o = random_rows(5, traj::kObsDim, rng);
  const auto p = random_rows(5, traj::kPrivDim, rng);
  Graph g(false);
  SetWindow too_long{o, std::span(p).first(4 * traj::kPrivDim), 0};
  EXPECT_THROW(tokenize_window(g, m, std::span(&too_long, 1)), ContractError);
  SetWindow late{std::span(o).first(2 * traj::kObsDim), std::span(p).first(traj::kPrivDim), 63};
  EXPECT_THROW(tokenize_window(g, m, std::span(&late, 1)), RangeError);
  SetWindow ragged{std::span(o).first(2 * traj::kObsDim), std::span(p).first(3), 0};
  EXPECT_THROW(tokenize_window(g, m, std::span(&ragged, 1)), DimensionError);
}

TEST(Attention, FirstPositionIsProjectedValue) {
  auto m = SetModel::create(tiny_set(), 4);
  Rng rng(4);
  const auto xs = random_rows(5, 8, rng);
  Graph g(false);
  NodeId x = g.input(nn::Tensor({5, 8}, xs));
  NodeId y = causal_self_attention(g, m, 0, x, {{0, 5}});
  Graph h(false);
  NodeId x0 = h.input(nn::Tensor({1, 8}, std::vector<double>(xs.begin(), xs.begin() + 8)));
  NodeId v = detail::linear(h, m.params, x0, "block0.attn.v");
  NodeId ref = detail::linear(h, m.params, v, "block0.attn.proj");
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(g.value(y).at(0, c), h.value(ref).at(0, c), 1e-14);
}

TEST(Attention, ZeroQueryKeyAveragesValuePrefix) {
  auto m = SetModel::create(tiny_set(), 5);
  for (const char* n : {"block0.attn.q.w", "block0.attn.q.b", "block0.attn.k.w", "block0.attn.k.b"}) {
    m.params.value(n).fill(0.0);
  }
  auto& proj = m.params.value("block0.attn.proj.w");
  proj.fill(0.0);
  for (std::size_t i = 0; i < 8; ++i) proj.at(i, i) = 1.0;
  m.params.value("block0.attn.proj.b").fill(0.0);

  Rng rng(5);
  const auto xs = random_rows(6, 8, rng);
  Graph g(false);
  NodeId x = g.input(nn::Tensor({6, 8}, xs));
  const nn::Tensor y = g.value(causal_self_attention(g, m, 0, x, {{0, 6}}));
  const nn::Tensor v = g.value(detail::linear(g, m.params, x, "block0.attn.v"));
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 8; ++c) {
      double mean = 0.0;
      for (std::size_t j = 0; j <= i; ++j) mean += v.at(j, c);
      EXPECT_NEAR(y.at(i, c), mean / static_cast<double>(i + 1), 1e-13);
    }
  }
}

TEST(SetForward, ZeroWeightsGiveHeadBias) {
  auto m = with_random_head(SetModel::create(tiny_set(), 6));
  zero_all(m.params);
  const std::vector<double> b{0.3, -1.0, 2.5, 0.0};
  std::copy(b.begin(), b.end(), m.params.value("head.b").values().begin());
  Rng rng(6);
  const auto o = random_rows(3, traj::kObsDim, rng);
  const auto p = random_rows(2, traj::kPrivDim, rng);
  const auto pred = predict_rows(m, {SetWindow{o, p, 0}});
  ASSERT_EQ(pred.size(), 12u);
  for (std::size_t i = 0; i < pred.size(); ++i) EXPECT_EQ(pred[i], b[i % 4]);
}

TEST(SetForward, CausalityIsBitExact) {
  const auto m = with_random_head(SetModel::create(tiny_set(6), 7));
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto o = random_rows(6, traj::kObsDim, rng);
    auto p = random_rows(5, traj::kPrivDim, rng);
    const auto base = predict_rows(m, {SetWindow{o, p, 3}});
    const std::size_t keep = 1 + rng.below(5);  // o rows [0, keep) and p rows [0, keep) untouched
    for (std::size_t i = keep * traj::kObsDim; i < o.size(); ++i) o[i] += rng.normal();
    for (std::size_t i = keep * traj::kPrivDim; i < p.size(); ++i) p[i] += rng.normal();
    const auto pert = predict_rows(m, {SetWindow{o, p, 3}});
    for (std::size_t i = 0; i < keep * traj::kPrivDim; ++i) ASSERT_EQ(base[i], pert[i]) << "trial " << trial;
  }
}

TEST(SetForward, AppendingPairsKeepsEarlierPredictions) {
  const auto m = with_random_head(SetModel::create(tiny_set(6), 8));
  Rng rng(8);
  const auto o = random_rows(6, traj::kObsDim, rng);
  const auto p = random_rows(5, traj::kPrivDim, rng);
  const auto full = predict_rows(m, {SetWindow{o, p, 0}});
  const auto part = predict_rows(
      m, {SetWindow{std::span(o).first(3 * traj::kObsDim), std::span(p).first(2 * traj::kPrivDim), 0}});
  for (std::size_t i = 0; i < part.size(); ++i) EXPECT_NEAR(part[i], full[i], 1e-12);
}

TEST(SetForward, BatchedWindowsAreIndependent) {
  const auto m = with_random_head(SetModel::create(tiny_set(4), 9));
  Rng rng(9);
  const auto o1 = random_rows(4, traj::kObsDim, rng), p1 = random_rows(3, traj::kPrivDim, rng);
  const auto o2 = random_rows(2, traj::kObsDim, rng), p2 = random_rows(1, traj::kPrivDim, rng);
  const auto both = predict_rows(m, {SetWindow{o1, p1, 0}, SetWindow{o2, p2, 10}});
  const auto a = predict_rows(m, {SetWindow{o1, p1, 0}});
  const auto b = predict_rows(m, {SetWindow{o2, p2, 10}});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(both[i], a[i], 1e-12);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(both[a.size() + i], b[i], 1e-12);
}

TEST(SetForward, EmbeddingsForObsAndPrivAreDistinct) {
  SetConfig c = tiny_set();
  c.d_obs = 4;
  auto m = with_random_head(SetModel::create(c, 10));
  Rng rng(10);
  const auto o = random_rows(3, 4, rng);
  const auto p = random_rows(2, 4, rng);
  const auto base = predict_rows(m, {SetWindow{o, p, 0}});
  auto swapped = m;
  std::swap(swapped.params.value("embed_o.w"), swapped.params.value("embed_p.w"));
  std::swap(swapped.params.value("embed_o.b"), swapped.params.value("embed_p.b"));
  const auto other = predict_rows(swapped, {SetWindow{o, p, 0}});
  double diff = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) diff += std::abs(base[i] - other[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(SetForward, GradientMatchesFiniteDifferences) {
  auto m = SetModel::create(tiny_set(), 11);
  Rng rng(11);
  // perturb gains and biases away from their init so every path is exercised
  for (auto& prm : m.params) {
    if (prm.trainable && prm.name.find("embed_t") == std::string::npos) {
      for (auto& v : prm.value.values()) v += 0.1 * rng.normal();
    }
  }
  const auto o = random_rows(2, traj::kObsDim, rng);
  const auto p = random_rows(1, traj::kPrivDim, rng);
  // targets near the current output keep the loss small, so finite-difference
  // roundoff stays well under the tolerance on coordinates with zero gradient
  auto target = predict_rows(m, {SetWindow{o, p, 2}});
  for (auto& t : target) t += 0.1 * rng.normal();
  const auto r = nn::grad_check_params(
      m.params,
      [&](Graph& g) {
        SetWindow w{o, p, 2};
        return g.mse(set_forward(g, m, std::span(&w, 1)), nn::Tensor({2, traj::kPrivDim}, target));
      },
      1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_EQ(r.non_finite, 0u);
  EXPECT_GT(r.coordinates, 500u);
}

TEST(WindowSampler, CoversEveryTrajectory) {
  const auto ds = constant_priv_dataset(10, 0.0, 7);
  WindowSampler s(ds, 20);
  Rng rng(12);
  std::set<std::size_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const auto w = s.sample(rng);
    ASSERT_LT(w.end, 7u);
    ASSERT_EQ(w.length, w.end + 1);
    seen.insert(w.traj);
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(SetTrain, FitsConstantTarget) {
  const auto ds = constant_priv_dataset(4, 0.7);
  TrainOptions opt;
  opt.iters = 500;
  opt.batch = 8;
  opt.adam.lr = 1e-3;
  const auto [m, res] = set_train(ds, tiny_set(), opt);
  const auto pred = set_predict_trajectories(m, std::span(ds).first(2), Mode::teacher_forced);
  for (const auto& rows : pred) {
    for (double v : rows) EXPECT_NEAR(v, 0.7, 1e-3);
  }
}

TEST(SetTrain, ZeroLearningRateKeepsLossConstant) {
  const auto ds = constant_priv_dataset(3, 0.2);
  TrainOptions opt;
  opt.iters = 5;
  opt.batch = 4;
  opt.adam.lr = 0.0;
  SetConfig c = tiny_set();
  // with a single fixed window the loss can only change through the weights
  auto one = ds;
  one.resize(1);
  one[0].resize(1);
  std::fill(one[0].priv.begin(), one[0].priv.end(), 0.2);
  const auto [m, res] = set_train(one, c, opt);
  for (double l : res.loss_trace) EXPECT_EQ(l, res.loss_trace.front());
  EXPECT_TRUE(m.params == set_train(one, c, opt).first.params);
}

TEST(SetTrain, DeterministicUnderSeed) {
  const auto ds = constant_priv_dataset(3, 0.1);
  TrainOptions opt;
  opt.iters = 10;
  opt.batch = 4;
  SetConfig c = tiny_set();
  c.dropout = 0.1;
  const auto a = set_train(ds, c, opt);
  const auto b = set_train(ds, c, opt);
  EXPECT_TRUE(a.first.params == b.first.params);
  EXPECT_EQ(a.second.loss_trace, b.second.loss_trace);
  opt.seed = 1;
  EXPECT_FALSE(a.first.params == set_train(ds, c, opt).first.params);
}

TEST(SetTrain, RejectsEmptyDataset) {
  EXPECT_THROW(set_train({}, tiny_set(), TrainOptions{}), ContractError);
}

TEST(SetPredict, FirstStepUsesSingleObservation) {
  const auto m = with_random_head(SetModel::create(tiny_set(), 13));
  Rng rng(13);
  const auto o = random_rows(1, traj::kObsDim, rng);
  const auto est = set_predict(m, o, {});
  const auto ref = predict_rows(m, {SetWindow{o, {}, 0}});
  ASSERT_EQ(est.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(est[i], ref[i]);
  EXPECT_THROW(set_predict(m, {}, {}), ContractError);
}

TEST(SetPredict, UsesOnlyTheLastContextSteps) {
  const auto m = with_random_head(SetModel::create(tiny_set(3), 14));
  Rng rng(14);
  auto o = random_rows(8, traj::kObsDim, rng);
  auto p = random_rows(7, traj::kPrivDim, rng);
  const auto a = set_predict(m, o, p);
  for (std::size_t i = 0; i < 4 * traj::kObsDim; ++i) o[i] = 100.0;
  for (std::size_t i = 0; i < 4 * traj::kPrivDim; ++i) p[i] = -100.0;
  EXPECT_EQ(a, set_predict(m, o, p));
}

TEST(SetPredict, ModesAgreeWhenPredictionsAreExact) {
  const auto m = with_random_head(SetModel::create(tiny_set(4), 15));
  traj::GenParams gp;
  gp.traj_len = 25;
  auto ds = traj::gen_dataset(2, traj::Mixture{{traj::Task::jump, 1.0}}, 3, gp);
  const auto closed = set_predict_trajectories(m, ds, Mode::closed_loop, 3);
  for (std::size_t i = 0; i < ds.size(); ++i) ds[i].priv = closed[i];
  const auto teacher = set_predict_trajectories(m, ds, Mode::teacher_forced, 5);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < closed[i].size(); ++j) EXPECT_NEAR(teacher[i][j], closed[i][j], 1e-12);
  }
}

TEST(SetPredict, BatchedTrajectoryPredictionMatchesSingleStep) {
  const auto m = with_random_head(SetModel::create(tiny_set(4), 16));
  traj::GenParams gp;
  gp.traj_len = 12;
  const auto ds = traj::gen_dataset(2, traj::Mixture{{traj::Task::walk, 1.0}}, 4, gp);
  const auto all = set_predict_trajectories(m, ds, Mode::teacher_forced, 7);
  const auto& tr = ds[1];
  for (std::size_t t = 0; t < tr.length(); ++t) {
    const auto est = set_predict(m, std::span(tr.obs).first((t + 1) * traj::kObsDim),
                                 std::span(tr.priv).first(t * traj::kPrivDim));
    for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(est[d], all[1][t * 4 + d], 1e-12);
  }
}

TEST(MlpConfig, Validation) {
  MlpConfig c;
  EXPECT_EQ(c.input_width(), 5u * 47u);
  c.history = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Mlp, ZeroWeightsGiveHeadBias) {
  auto m = MlpModel::create(tiny_mlp(), 1);
  zero_all(m.params);
  const std::vector<double> b{1.0, 2.0, -3.0, 0.5};
  std::copy(b.begin(), b.end(), m.params.value("head.b").values().begin());
  Rng rng(1);
  EXPECT_EQ(mlp_forward(m, random_rows(3, traj::kObsDim, rng)), b);
}

TEST(Mlp, RejectsWrongInputLength) {
  const auto m = with_random_head(MlpModel::create(tiny_mlp(), 1));
  EXPECT_THROW(mlp_forward(m, std::vector<double>(10, 0.0)), DimensionError);
}

TEST(Mlp, IgnoresFramesOutsideHistory) {
  const auto m = with_random_head(MlpModel::create(tiny_mlp(), 2));
  Rng rng(2);
  auto o = random_rows(6, traj::kObsDim, rng);
  const auto a = mlp_predict(m, o);
  for (std::size_t i = 0; i < 3 * traj::kObsDim; ++i) o[i] = 42.0;
  EXPECT_EQ(a, mlp_predict(m, o));
  EXPECT_EQ(a, mlp_forward(m, std::span(o).last(3 * traj::kObsDim)));
}

TEST(Mlp, FrontPadsShortHistory) {
  const auto m = with_random_head(MlpModel::create(tiny_mlp(), 3));
  Rng rng(3);
  const auto o = random_rows(1, traj::kObsDim, rng);
  std::vector<double> stacked(3 * traj::kObsDim, 0.0);
  std::copy(o.begin(), o.end(), stacked.begin() + 2 * traj::kObsDim);
  EXPECT_EQ(stack_history(o, 0, m.config), stacked);
  EXPECT_EQ(mlp_predict(m, o), mlp_forward(m, stacked));
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  auto m = MlpModel::create(tiny_mlp(), 4);
  Rng rng(4);
  for (auto& prm : m.params) {
    if (prm.trainable) {
      for (auto& v : prm.value.values()) v += 0.05 * rng.normal();
    }
  }
  const auto x = random_rows(2, 3 * traj::kObsDim, rng);
  std::vector<double> target;
  for (std::size_t r = 0; r < 2; ++r) {
    const auto y = mlp_forward(m, std::span(x).subspan(r * 3 * traj::kObsDim, 3 * traj::kObsDim));
    for (double v : y) target.push_back(v + 0.1 * rng.normal());
  }
  const auto r = nn::grad_check_params(
      m.params,
      [&](Graph& g) { return g.mse(mlp_forward_graph(g, m, x), nn::Tensor({2, traj::kPrivDim}, target)); }, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(MlpTrain, FitsConstantTarget) {
  const auto ds = constant_priv_dataset(4, -0.4);
  TrainOptions opt;
  opt.iters = 500;
  opt.batch = 16;
  opt.adam.lr = 1e-3;
  const auto [m, res] = mlp_train(ds, tiny_mlp(), opt);
  for (const auto& rows : mlp_predict_trajectories(m, ds)) {
    for (double v : rows) EXPECT_NEAR(v, -0.4, 1e-3);
  }
}

TEST(MlpTrain, ZeroLearningRateAndDeterminism) {
  const auto ds = constant_priv_dataset(3, 0.3);
  TrainOptions opt;
  opt.iters = 5;
  opt.batch = 4;
  opt.adam.lr = 0.0;
  const auto fresh = MlpModel::create(tiny_mlp(), opt.seed);
  const auto [m, res] = mlp_train(ds, tiny_mlp(), opt);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    if (m.params[i].trainable) {
      EXPECT_TRUE(m.params[i].value == fresh.params[i].value) << m.params[i].name;
    }
  }
  opt.adam.lr = 1e-3;
  EXPECT_TRUE(mlp_train(ds, tiny_mlp(), opt).first.params == mlp_train(ds, tiny_mlp(), opt).first.params);
}

TEST(MlpPredict, TrajectoryBatchMatchesSingleStep) {
  const auto m = with_random_head(MlpModel::create(tiny_mlp(), 5));
  traj::GenParams gp;
  gp.traj_len = 10;
  const auto ds = traj::gen_dataset(1, traj::Mixture{{traj::Task::jump, 1.0}}, 8, gp);
  const auto all = mlp_predict_trajectories(m, ds);
  for (std::size_t t = 0; t < 10; ++t) {
    const auto est = mlp_predict(m, std::span(ds[0].obs).first((t + 1) * traj::kObsDim));
    for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(est[d], all[0][t * 4 + d], 1e-12);
  }
}
