#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "setest/errors.hpp"
#include "setest/eval.hpp"
#include "setest/io/checkpoint.hpp"
#include "setest/io/csv.hpp"
#include "setest/io/dataset_file.hpp"
#include "setest/io/run_config.hpp"
#include "setest/io/svg.hpp"
#include "setest/model/gradient_suite.hpp"
#include "setest/reset_monitor.hpp"
#include "setest/traj/generator.hpp"

namespace setest::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

inline constexpr const char* kDatasetExt = ".setd";
inline constexpr const char* kCheckpointExt = ".ckpt";

/// Task mixture for `gen --task`: a single task, "mixed" (the three jump
/// tasks in equal parts) or "all" (all four tasks in equal parts).
inline traj::Mixture mixture_for(const std::string& task) {
  if (task == "mixed") return traj::uniform_mixture(traj::kJumpTasks);
  if (task == "all") return traj::uniform_mixture(traj::kAllTasks);
  const auto t = traj::parse_task(task);
  if (!t) throw ContractError("unknown task '" + task + "'");
  return traj::Mixture{{*t, 1.0}};
}

inline std::vector<std::string> task_choices() {
  std::vector<std::string> v;
  for (auto t : traj::kAllTasks) v.emplace_back(traj::task_name(t));
  v.emplace_back("mixed");
  v.emplace_back("all");
  return v;
}

/// Single tasks first in their canonical order, then any other names sorted.
inline bool canonical_less(const std::string& a, const std::string& b) {
  auto rank = [](const std::string& s) {
    const auto t = traj::parse_task(s);
    return t ? static_cast<int>(*t) : 100;
  };
  const int ra = rank(a), rb = rank(b);
  return ra != rb ? ra < rb : a < b;
}

/// Files in `dir` with extension `ext`, keyed by stem, in canonical order.
inline std::vector<std::pair<std::string, std::string>> files_with_ext(const std::string& dir, const std::string& ext) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw FormatError("'" + dir + "' is not a directory");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.emplace_back(e.path().stem().string(), e.path().string());
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return canonical_less(a.first, b.first); });
  if (out.empty()) throw FormatError("no *" + ext + " files in '" + dir + "'");
  return out;
}

inline io::RunConfig load_config(const std::string& path) {
  return path.empty() ? [] {
    io::RunConfig c;
    c.sync();
    return c;
  }()
                      : io::read_run_config(path);
}

inline void print_rms(std::ostream& out, const std::string& label, const eval::Rms& rms) {
  out << label;
  for (std::size_t d = 0; d < traj::kPrivDim; ++d) out << "  " << traj::kPrivNames[d] << "=" << io::format_double(rms[d]);
  out << "\n";
}

struct Options {
  // gen
  std::string task = "mixed";
  std::size_t n = 0;
  std::uint64_t seed = 0;
  // shared
  std::string out, data, config, ckpt, mode = "teacher-forced";
  unsigned workers = 1;
  // train
  std::string model = "set", loss_csv;
  // eval
  std::string report;
  // transfer
  std::string ckpt_dir, data_dir, heatmap;
  // ablate
  std::string which;
  // plot
  std::string in, kind;
};

inline int run_gen(const Options& o, std::ostream& out) {
  io::RunConfig cfg = load_config(o.config);
  const auto data = traj::gen_dataset(o.n, mixture_for(o.task), o.seed, cfg.gen);
  io::write_dataset(o.out, data);
  out << "wrote " << data.size() << " trajectories to " << o.out << "\n";
  return kExitOk;
}

inline int run_train(const Options& o, std::ostream& out) {
  io::RunConfig cfg = load_config(o.config);
  const auto data = io::read_dataset(o.data);
  if (data.empty()) throw FormatError("dataset '" + o.data + "' holds no trajectories");
  const std::size_t every = std::max<std::size_t>(1, cfg.train.iters / 20);
  cfg.train.on_step = [&](std::size_t it, double loss) {
    if (it % every == 0 || it + 1 == cfg.train.iters) out << "iter " << it << " loss " << io::format_double(loss) << "\n";
  };
  std::vector<double> trace;
  if (o.model == "set") {
    auto [m, res] = model::set_train(data, cfg.set, cfg.train);
    io::write_checkpoint(o.out, m);
    trace = std::move(res.loss_trace);
  } else {
    auto [m, res] = model::mlp_train(data, cfg.mlp, cfg.train);
    io::write_checkpoint(o.out, m);
    trace = std::move(res.loss_trace);
  }
  if (!o.loss_csv.empty()) io::write_csv(o.loss_csv, io::loss_csv(trace));
  out << "wrote " << o.model << " checkpoint to " << o.out << "\n";
  return kExitOk;
}

inline int run_eval(const Options& o, std::ostream& out) {
  io::AnyModel m = io::read_checkpoint(o.ckpt);
  const auto data = io::read_dataset(o.data);
  io::require_dims(m, traj::kObsDim, traj::kPrivDim);
  const auto kind = io::kind_of(m);
  const auto est = io::make_estimator(std::move(m));
  const auto rep = eval::evaluate(*est, data, model::parse_mode(o.mode),
                                  std::filesystem::path(o.data).filename().string(), o.workers);
  print_rms(out, std::string(io::kind_name(kind)) + " " + std::string(model::mode_name(rep.mode)) + " rms:", rep.rms);
  if (!o.report.empty()) {
    const std::vector<eval::EvalReport> reps{rep};
    io::write_csv(o.report, io::eval_csv(reps));
  }
  return kExitOk;
}

inline int run_transfer(const Options& o, std::ostream& out) {
  std::vector<eval::NamedEstimator> models;
  for (const auto& [name, path] : files_with_ext(o.ckpt_dir, kCheckpointExt)) {
    io::AnyModel m = io::read_checkpoint(path);
    io::require_dims(m, traj::kObsDim, traj::kPrivDim);
    models.push_back({name, io::make_estimator(std::move(m), name)});
  }
  std::vector<eval::NamedDataset> datasets;
  for (const auto& [name, path] : files_with_ext(o.data_dir, kDatasetExt)) datasets.push_back({name, io::read_dataset(path)});
  const auto tm = eval::transfer_matrix(models, datasets, model::parse_mode(o.mode), o.workers);
  const auto table = io::transfer_csv(tm);
  io::write_csv(o.out, table);
  if (!o.heatmap.empty()) io::write_text_file(o.heatmap, io::render_svg(table, io::PlotKind::heatmap));
  for (std::size_t e = 0; e < tm.eval_tasks.size(); ++e) {
    for (std::size_t t = 0; t < tm.train_sets.size(); ++t) {
      print_rms(out, "train " + tm.train_sets[t] + " / eval " + tm.eval_tasks[e] + ":", tm.cell(e, t));
    }
  }
  return kExitOk;
}

inline int run_ablate(const Options& o, std::ostream& out) {
  const io::RunConfig cfg = load_config(o.config);
  const auto kind = eval::parse_ablation(o.which);
  const auto train = traj::gen_dataset(cfg.n_traj, traj::uniform_mixture(cfg.tasks), cfg.data_seed, cfg.gen);
  const auto test = traj::gen_dataset(cfg.trials, traj::uniform_mixture(cfg.tasks), cfg.eval_seed, cfg.gen);
  const auto rep = eval::run_ablation(kind, train, test, cfg.set, cfg.train, cfg.ablation_seeds);
  io::write_csv(o.out, io::ablation_csv(rep));
  for (const auto& r : rep.rows) print_rms(out, r.variant + " seed " + std::to_string(r.seed) + ":", r.rms);
  return kExitOk;
}

inline int run_reset_check(const Options& o, std::ostream& out) {
  const io::RunConfig cfg = load_config(o.config);
  io::AnyModel m = io::read_checkpoint(o.ckpt);
  const auto data = io::read_dataset(o.data);
  io::require_dims(m, traj::kObsDim, traj::kPrivDim);
  const auto est = io::make_estimator(std::move(m));
  const auto pred = est->predict(data, model::Mode::closed_loop);
  std::vector<std::vector<double>> h(data.size());
  std::vector<reset::MonitorResult> results;
  std::size_t triggered = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    h[i].resize(data[i].length());
    for (std::size_t t = 0; t < data[i].length(); ++t) h[i][t] = pred[i][t * traj::kPrivDim + traj::priv::h];
    results.push_back(reset::run_monitor(data[i], h[i], cfg.reset));
    if (results.back().trigger) ++triggered;
  }
  io::write_csv(o.out, io::reset_csv(data, h, results));
  out << triggered << " of " << data.size() << " trajectories triggered a reset\n";
  return kExitOk;
}

inline int run_gradcheck(std::ostream& out) {
  const auto rep = model::run_gradient_suite();
  for (const auto& c : rep.cases) {
    out << c.name << ": max relative error " << io::format_double(c.result.max_rel_error) << " over "
        << c.result.coordinates << " coordinates (worst " << c.result.worst << ")\n";
  }
  out << "max relative error: " << io::format_double(rep.max_rel_error()) << "\n";
  out << (rep.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << io::format_double(rep.tolerance)
      << ")\n";
  return rep.passed() ? kExitOk : kExitData;
}

/// Picks the plot from the CSV columns when --kind is not given.
inline io::PlotKind infer_plot_kind(const io::CsvTable& t) {
  if (t.has("train_set") && t.has("eval_task")) return io::PlotKind::heatmap;
  if (t.has("iter") && t.has("loss")) return io::PlotKind::loss_curve;
  if (t.has("dim") && t.has("rms")) return io::PlotKind::error_bars;
  throw ColumnError("cannot tell the plot kind from the CSV header; expected columns iter,loss or dim,rms");
}

inline int run_plot(const Options& o, std::ostream& out) {
  const auto table = io::read_csv(o.in);
  const auto kind = o.kind.empty() ? infer_plot_kind(table) : io::parse_plot_kind(o.kind);
  io::write_text_file(o.out, io::render_svg(table, kind));
  out << "wrote " << o.out << "\n";
  return kExitOk;
}

/// Parses argv and runs one subcommand. Returns 0 on success, 1 on a usage
/// error (usage text goes to `err`) and 2 on a data, format or check failure.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"State estimation transformer toolkit", "setest"};
  app.require_subcommand(1);
  Options o;
  const auto existing = CLI::ExistingFile;
  const auto modes = CLI::IsMember({"teacher-forced", "closed-loop"});

  auto* gen = app.add_subcommand("gen", "Generate a synthetic trajectory dataset");
  gen->add_option("--task", o.task, "Task, or 'mixed' (jump tasks) / 'all'")->check(CLI::IsMember(task_choices()));
  gen->add_option("--n", o.n, "Number of trajectories")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Global seed");
  gen->add_option("--out", o.out, "Output dataset file")->required();
  gen->add_option("--config", o.config, "Run configuration (generator keys)")->check(existing);

  auto* train = app.add_subcommand("train", "Train an estimator on a dataset");
  train->add_option("--model", o.model, "set or mlp")->check(CLI::IsMember({"set", "mlp"}));
  train->add_option("--data", o.data, "Training dataset")->required()->check(existing);
  train->add_option("--config", o.config, "Run configuration")->check(existing);
  train->add_option("--out", o.out, "Output checkpoint")->required();
  train->add_option("--loss", o.loss_csv, "Optional CSV of the loss trace");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  ev->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(existing);
  ev->add_option("--data", o.data, "Evaluation dataset")->required()->check(existing);
  ev->add_option("--mode", o.mode, "teacher-forced or closed-loop")->check(modes);
  ev->add_option("--report", o.report, "Optional CSV report");
  ev->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* tr = app.add_subcommand("transfer", "Cross-task transfer matrix");
  tr->add_option("--ckpt-dir", o.ckpt_dir, "Directory of <train_set>.ckpt files")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--data-dir", o.data_dir, "Directory of <task>.setd files")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", o.out, "Output CSV")->required();
  tr->add_option("--mode", o.mode, "teacher-forced or closed-loop")->check(modes);
  tr->add_option("--heatmap", o.heatmap, "Optional SVG heatmap");
  tr->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* ab = app.add_subcommand("ablate", "Context or dataset-size ablation");
  ab->add_option("--which", o.which, "context or dataset-size")->required()->check(CLI::IsMember({"context", "dataset-size"}));
  ab->add_option("--config", o.config, "Run configuration")->check(existing);
  ab->add_option("--out", o.out, "Output CSV")->required();

  auto* rc = app.add_subcommand("reset-check", "Run the reset monitor on closed-loop height estimates");
  rc->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(existing);
  rc->add_option("--data", o.data, "Dataset")->required()->check(existing);
  rc->add_option("--out", o.out, "Output CSV of per-step flags")->required();
  rc->add_option("--config", o.config, "Run configuration (eps_r, debounce)")->check(existing);

  app.add_subcommand("gradcheck", "Finite-difference check of the SET and MLP gradients");

  auto* pl = app.add_subcommand("plot", "Render a report CSV as SVG");
  pl->add_option("--in", o.in, "Input CSV")->required()->check(existing);
  pl->add_option("--out", o.out, "Output SVG")->required();
  pl->add_option("--kind", o.kind, "loss-curve, error-bars or heatmap (default: from the header)")
      ->check(CLI::IsMember({"loss-curve", "error-bars", "heatmap"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen") return run_gen(o, out);
    if (name == "train") return run_train(o, out);
    if (name == "eval") return run_eval(o, out);
    if (name == "transfer") return run_transfer(o, out);
    if (name == "ablate") return run_ablate(o, out);
    if (name == "reset-check") return run_reset_check(o, out);
    if (name == "gradcheck") return run_gradcheck(out);
    return run_plot(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace setest::cli
