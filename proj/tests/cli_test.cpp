#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "setest/cli.hpp"

using namespace setest;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "setest");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("setest_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    io::write_text_file(file("tiny.cfg"), "iters=20\nbatch=4\nH=4\nn_blocks=1\nn_heads=2\nd_model=8\nmlp_history=2\nmlp_layers=1\nmlp_width=8\ntraj_len=60\n");
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string file(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GradcheckPassesAndPrintsError) {
  const auto r = run({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("max relative error:"), std::string::npos);
}

TEST_F(CliTest, GenIsDeterministic) {
  ASSERT_EQ(run({"gen", "--task", "jump", "--n", "10", "--seed", "7", "--out", file("a.setd")}).code, 0);
  ASSERT_EQ(run({"gen", "--task", "jump", "--n", "10", "--seed", "7", "--out", file("b.setd")}).code, 0);
  ASSERT_EQ(run({"gen", "--task", "jump", "--n", "10", "--seed", "8", "--out", file("c.setd")}).code, 0);
  EXPECT_EQ(io::read_file(file("a.setd")), io::read_file(file("b.setd")));
  EXPECT_NE(io::read_file(file("a.setd")), io::read_file(file("c.setd")));
  const auto data = io::read_dataset(file("a.setd"));
  ASSERT_EQ(data.size(), 10u);
  for (const auto& tr : data) EXPECT_EQ(tr.task, traj::Task::jump);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  const auto unknown = run({"gen", "--n", "3", "--out", file("x.setd"), "--bogus"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos) << unknown.err;
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"gen", "--task", "moonwalk", "--n", "3", "--out", file("x.setd")}).code, 1);
  EXPECT_EQ(run({"eval", "--ckpt", file("missing.ckpt"), "--data", file("missing.setd")}).code, 1);
  EXPECT_FALSE(fs::exists(file("x.setd")));
}

TEST_F(CliTest, EvalWithMismatchedCheckpointExitsTwo) {
  ASSERT_EQ(run({"gen", "--task", "walk", "--n", "2", "--out", file("d.setd"), "--config", file("tiny.cfg")}).code, 0);
  model::SetConfig cfg;
  cfg.d_obs = traj::kObsDim + 3;
  cfg.n_blocks = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  io::write_checkpoint(file("bad.ckpt"), io::AnyModel{model::SetModel::create(cfg, 0)});
  const auto r = run({"eval", "--ckpt", file("bad.ckpt"), "--data", file("d.setd")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("dims"), std::string::npos) << r.err;
  // a dataset passed where a checkpoint belongs is a format error too
  EXPECT_EQ(run({"eval", "--ckpt", file("d.setd"), "--data", file("d.setd")}).code, 2);
}

TEST_F(CliTest, BadConfigExitsTwo) {
  io::write_text_file(file("bad.cfg"), "learning_rate=1\n");
  const auto r = run({"gen", "--n", "2", "--out", file("d.setd"), "--config", file("bad.cfg")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
}

TEST_F(CliTest, PipelineIsReproducible) {
  // identical file names in two directories: the report records the dataset name
  for (const char* run_dir : {"r1", "r2"}) {
    const std::string d = std::string(run_dir) + "/";
    fs::create_directories(file(d));
    ASSERT_EQ(run({"gen", "--task", "mixed", "--n", "6", "--seed", "3", "--out", file(d + "d.setd"), "--config",
                   file("tiny.cfg")})
                  .code,
              0);
    for (const char* kind : {"set", "mlp"}) {
      const std::string k = kind;
      const auto tr = run({"train", "--model", k, "--data", file(d + "d.setd"), "--config", file("tiny.cfg"), "--out",
                           file(d + k + ".ckpt"), "--loss", file(d + k + "_loss.csv")});
      ASSERT_EQ(tr.code, 0) << tr.err;
      const auto ev = run({"eval", "--ckpt", file(d + k + ".ckpt"), "--data", file(d + "d.setd"), "--mode",
                           "closed-loop", "--report", file(d + k + ".csv")});
      ASSERT_EQ(ev.code, 0) << ev.err;
    }
    ASSERT_EQ(run({"plot", "--in", file(d + "set_loss.csv"), "--out", file(d + "loss.svg")}).code, 0);
  }
  for (const char* f : {"d.setd", "set.ckpt", "mlp.ckpt", "set.csv", "mlp.csv", "set_loss.csv", "loss.svg"}) {
    EXPECT_EQ(io::read_file(file(std::string("r1/") + f)), io::read_file(file(std::string("r2/") + f))) << f;
  }
  EXPECT_EQ(io::read_csv(file("r1/set.csv")).rows.size(), traj::kPrivDim);
}

TEST_F(CliTest, TransferWritesMatrixAndHeatmap) {
  fs::create_directories(file("ckpt"));
  fs::create_directories(file("data"));
  for (const char* task : {"jump", "backflip"}) {
    const std::string t = task;
    ASSERT_EQ(run({"gen", "--task", t, "--n", "3", "--seed", "1", "--out", file("data/" + t + ".setd"), "--config",
                   file("tiny.cfg")})
                  .code,
              0);
    ASSERT_EQ(run({"train", "--data", file("data/" + t + ".setd"), "--config", file("tiny.cfg"), "--out",
                   file("ckpt/" + t + ".ckpt")})
                  .code,
              0);
  }
  const auto r = run({"transfer", "--ckpt-dir", file("ckpt"), "--data-dir", file("data"), "--out", file("t.csv"),
                      "--heatmap", file("t.svg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = io::read_csv(file("t.csv"));
  EXPECT_EQ(t.rows.size(), 2u * 2u * traj::kPrivDim);
  EXPECT_EQ(t.rows.front()[t.column("train_set")], "jump");  // canonical task order, not directory order
  EXPECT_TRUE(fs::exists(file("t.svg")));
  EXPECT_EQ(run({"plot", "--in", file("t.csv"), "--out", file("t2.svg")}).code, 0);
  EXPECT_EQ(io::read_file(file("t.svg")), io::read_file(file("t2.svg")));
}

TEST_F(CliTest, ResetCheckWritesPerStepFlags) {
  ASSERT_EQ(run({"gen", "--task", "backflip", "--n", "2", "--out", file("d.setd"), "--config", file("tiny.cfg")}).code, 0);
  ASSERT_EQ(run({"train", "--data", file("d.setd"), "--config", file("tiny.cfg"), "--out", file("m.ckpt")}).code, 0);
  const auto r = run({"reset-check", "--ckpt", file("m.ckpt"), "--data", file("d.setd"), "--out", file("r.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = io::read_csv(file("r.csv"));
  EXPECT_EQ(t.rows.size(), 2u * 60u);
  EXPECT_NO_THROW(t.column("flag"));
}

TEST_F(CliTest, AblateWritesRowsPerSeedAndVariant) {
  io::write_text_file(file("ab.cfg"), "iters=5\nbatch=4\nH=4\nn_blocks=1\nn_heads=2\nd_model=8\ntraj_len=40\nn_traj=10\n"
                                      "trials=3\nablation_seeds=0,1\n");
  const auto r = run({"ablate", "--which", "context", "--config", file("ab.cfg"), "--out", file("a.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = io::read_csv(file("a.csv"));
  EXPECT_EQ(t.rows.size(), 2u * 2u * traj::kPrivDim);
  EXPECT_EQ(run({"plot", "--in", file("a.csv"), "--out", file("a.svg")}).code, 0);
  EXPECT_EQ(run({"ablate", "--which", "width", "--out", file("b.csv")}).code, 1);
}

TEST_F(CliTest, PlotOfEmptyCsvFailsWithoutOutput) {
  io::write_text_file(file("empty.csv"), "");
  io::write_text_file(file("nocol.csv"), "train_set,eval_task,dim\njump,jump,h\n");
  EXPECT_EQ(run({"plot", "--in", file("empty.csv"), "--out", file("e.svg")}).code, 2);
  const auto r = run({"plot", "--in", file("nocol.csv"), "--out", file("n.svg"), "--kind", "heatmap"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("rms"), std::string::npos);
  EXPECT_FALSE(fs::exists(file("e.svg")));
  EXPECT_FALSE(fs::exists(file("n.svg")));
}
