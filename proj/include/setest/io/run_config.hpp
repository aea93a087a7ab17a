#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "setest/errors.hpp"
#include "setest/io/binary.hpp"
#include "setest/io/keyvalue.hpp"
#include "setest/model/common.hpp"
#include "setest/model/mlp.hpp"
#include "setest/model/set_model.hpp"
#include "setest/reset_monitor.hpp"
#include "setest/traj/generator.hpp"

namespace setest::io {

/// Every tunable of a run. Each field has a default; a config file only
/// lists the keys it overrides.
struct RunConfig {
  model::SetConfig set{};
  model::MlpConfig mlp{};
  model::TrainOptions train{};
  traj::GenParams gen{};
  std::size_t n_traj = 2000;
  std::uint64_t data_seed = 0;
  std::vector<traj::Task> tasks{traj::kJumpTasks.begin(), traj::kJumpTasks.end()};
  std::size_t trials = 128;  // evaluation trajectories
  std::uint64_t eval_seed = 1000;
  reset::ResetConfig reset{};
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
  unsigned workers = 1;

  /// Keeps values that several modules share consistent.
  void sync() {
    gen.max_episode_len = set.max_episode_len;
    reset.h_walk = gen.h_walk;
  }

  void validate() const {
    set.validate();
    mlp.validate();
    gen.validate();
    reset.validate();
    if (train.batch == 0) throw ConfigError("batch must be >= 1");
    if (!(train.adam.lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (n_traj == 0 || trials == 0) throw ConfigError("n_traj and trials must be >= 1");
    if (tasks.empty()) throw ConfigError("tasks must name at least one task");
    if (ablation_seeds.empty()) throw ConfigError("ablation_seeds must list at least one seed");
    if (workers == 0) throw ConfigError("workers must be >= 1");
  }
};

namespace detail {

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field size_field(std::string_view key, T RunConfig::*outer, std::size_t T::*inner) {
  return {key, [=](RunConfig& c, std::string_view v) { (c.*outer).*inner = parse_uint(v, key); },
          [=](const RunConfig& c) { return std::to_string((c.*outer).*inner); }};
}

template <class T>
Field double_field(std::string_view key, T RunConfig::*outer, double T::*inner) {
  return {key, [=](RunConfig& c, std::string_view v) { (c.*outer).*inner = parse_double(v, key); },
          [=](const RunConfig& c) { return format_double((c.*outer).*inner); }};
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
  }
  return out;
}

inline const std::vector<Field>& fields() {
  using model::MlpConfig;
  using model::SetConfig;
  using traj::GenParams;
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        size_field("H", &RunConfig::set, &SetConfig::context),
        size_field("n_blocks", &RunConfig::set, &SetConfig::n_blocks),
        size_field("n_heads", &RunConfig::set, &SetConfig::n_heads),
        size_field("d_model", &RunConfig::set, &SetConfig::d_model),
        double_field("dropout", &RunConfig::set, &SetConfig::dropout),
        size_field("max_episode_len", &RunConfig::set, &SetConfig::max_episode_len),
        size_field("mlp_history", &RunConfig::mlp, &MlpConfig::history),
        size_field("mlp_layers", &RunConfig::mlp, &MlpConfig::layers),
        size_field("mlp_width", &RunConfig::mlp, &MlpConfig::width),
        {"lr", [](RunConfig& c, std::string_view v) { c.train.adam.lr = parse_double(v, "lr"); },
         [](const RunConfig& c) { return format_double(c.train.adam.lr); }},
        {"beta1", [](RunConfig& c, std::string_view v) { c.train.adam.beta1 = parse_double(v, "beta1"); },
         [](const RunConfig& c) { return format_double(c.train.adam.beta1); }},
        {"beta2", [](RunConfig& c, std::string_view v) { c.train.adam.beta2 = parse_double(v, "beta2"); },
         [](const RunConfig& c) { return format_double(c.train.adam.beta2); }},
        {"adam_eps", [](RunConfig& c, std::string_view v) { c.train.adam.eps = parse_double(v, "adam_eps"); },
         [](const RunConfig& c) { return format_double(c.train.adam.eps); }},
        {"lr_decay", [](RunConfig& c, std::string_view v) { c.train.lr_decay = parse_bool(v, "lr_decay"); },
         [](const RunConfig& c) { return std::string(c.train.lr_decay ? "true" : "false"); }},
        size_field("iters", &RunConfig::train, &model::TrainOptions::iters),
        size_field("batch", &RunConfig::train, &model::TrainOptions::batch),
        {"seed", [](RunConfig& c, std::string_view v) { c.train.seed = parse_uint(v, "seed"); },
         [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        {"n_traj", [](RunConfig& c, std::string_view v) { c.n_traj = parse_uint(v, "n_traj"); },
         [](const RunConfig& c) { return std::to_string(c.n_traj); }},
        {"data_seed", [](RunConfig& c, std::string_view v) { c.data_seed = parse_uint(v, "data_seed"); },
         [](const RunConfig& c) { return std::to_string(c.data_seed); }},
        {"tasks",
         [](RunConfig& c, std::string_view v) {
           c.tasks.clear();
           for (auto name : split_list(v)) {
             const auto t = traj::parse_task(name);
             if (!t) throw ConfigError("tasks: unknown task '" + std::string(name) + "'");
             c.tasks.push_back(*t);
           }
         },
         [](const RunConfig& c) {
           std::string s;
           for (auto t : c.tasks) s += (s.empty() ? "" : ",") + std::string(traj::task_name(t));
           return s;
         }},
        {"trials", [](RunConfig& c, std::string_view v) { c.trials = parse_uint(v, "trials"); },
         [](const RunConfig& c) { return std::to_string(c.trials); }},
        {"eval_seed", [](RunConfig& c, std::string_view v) { c.eval_seed = parse_uint(v, "eval_seed"); },
         [](const RunConfig& c) { return std::to_string(c.eval_seed); }},
        double_field("eps_r", &RunConfig::reset, &reset::ResetConfig::eps_r),
        size_field("debounce", &RunConfig::reset, &reset::ResetConfig::debounce),
        {"ablation_seeds",
         [](RunConfig& c, std::string_view v) {
           c.ablation_seeds.clear();
           for (auto s : split_list(v)) c.ablation_seeds.push_back(parse_uint(s, "ablation_seeds"));
         },
         [](const RunConfig& c) {
           std::string s;
           for (auto x : c.ablation_seeds) s += (s.empty() ? "" : ",") + std::to_string(x);
           return s;
         }},
        {"workers",
         [](RunConfig& c, std::string_view v) { c.workers = static_cast<unsigned>(parse_uint(v, "workers")); },
         [](const RunConfig& c) { return std::to_string(c.workers); }},
        size_field("traj_len", &RunConfig::gen, &GenParams::traj_len),
    };
    const std::pair<std::string_view, double GenParams::*> gen_doubles[] = {
        {"gen.g", &GenParams::g},
        {"gen.dt", &GenParams::dt},
        {"gen.h_walk", &GenParams::h_walk},
        {"gen.h_jump_min", &GenParams::h_jump_min},
        {"gen.h_jump_max", &GenParams::h_jump_max},
        {"gen.vx_max", &GenParams::vx_max},
        {"gen.vy_max", &GenParams::vy_max},
        {"gen.yaw_rate_max", &GenParams::yaw_rate_max},
        {"gen.f0", &GenParams::f0},
        {"gen.f_per_speed", &GenParams::f_per_speed},
        {"gen.tau_v", &GenParams::tau_v},
        {"eps_h", &GenParams::eps_h},
        {"gen.height_amplitude", &GenParams::height_amplitude},
        {"gen.segment_min", &GenParams::segment_min},
        {"gen.segment_max", &GenParams::segment_max},
        {"gen.first_jump_min", &GenParams::first_jump_min},
        {"gen.jump_gap_min", &GenParams::jump_gap_min},
        {"gen.jump_gap_max", &GenParams::jump_gap_max},
    };
    for (const auto& [k, m] : gen_doubles) f.push_back(double_field(k, &RunConfig::gen, m));
    const std::pair<std::string_view, double traj::NoiseParams::*> noise[] = {
        {"noise.omega", &traj::NoiseParams::omega},         {"noise.gravity", &traj::NoiseParams::gravity},
        {"noise.joint_pos", &traj::NoiseParams::joint_pos}, {"noise.joint_vel", &traj::NoiseParams::joint_vel},
        {"noise.foot_pos", &traj::NoiseParams::foot_pos},   {"noise.cmd", &traj::NoiseParams::cmd},
    };
    for (const auto& [k, m] : noise) {
      f.push_back({k, [k, m](RunConfig& c, std::string_view v) { c.gen.noise.*m = parse_double(v, k); },
                   [m](const RunConfig& c) { return format_double(c.gen.noise.*m); }});
    }
    return f;
  }();
  return table;
}

}  // namespace detail

/// Applies key=value overrides to the defaults. Unknown keys are rejected.
inline RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  for (const auto& kv : parse_kv(text)) {
    const auto& table = detail::fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.key == kv.key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
    it->set(c, kv.value);
  }
  c.sync();
  c.validate();
  return c;
}

/// Every key with its current value, one per line, in table order.
inline std::string to_text(const RunConfig& c) {
  std::string s;
  for (const auto& f : detail::fields()) s += std::string(f.key) + "=" + f.get(c) + "\n";
  return s;
}

inline RunConfig read_run_config(const std::string& path) { return parse_run_config(read_text_file(path)); }

}  // namespace setest::io
