#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "setest/errors.hpp"
#include "setest/eval.hpp"
#include "setest/io/binary.hpp"
#include "setest/io/keyvalue.hpp"
#include "setest/reset_monitor.hpp"

namespace setest::io {

/// Comma-separated table with a header row. Fields never contain commas,
/// quotes or newlines, so no quoting is needed.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ColumnError("CSV is missing column '" + std::string(name) + "'");
  }

  bool has(std::string_view name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }

  std::string to_string() const {
    std::string s;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
      s += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return s;
  }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) {
        throw FormatError("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                          " fields, header has " + std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw ColumnError("CSV is empty: no header row");
  return t;
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_text_file(path)); }
inline void write_csv(const std::string& path, const CsvTable& t) { write_text_file(path, t.to_string()); }

inline CsvTable eval_csv(std::span<const eval::EvalReport> reports) {
  CsvTable t{{"model", "dataset", "mode", "dim", "rms", "trials"}, {}};
  for (const auto& r : reports) {
    for (std::size_t d = 0; d < traj::kPrivDim; ++d) {
      t.rows.push_back({r.model, r.dataset, std::string(model::mode_name(r.mode)), std::string(traj::kPrivNames[d]),
                        format_double(r.rms[d]), std::to_string(r.trials)});
    }
  }
  return t;
}

inline CsvTable transfer_csv(const eval::TransferMatrix& m) {
  CsvTable t{{"train_set", "eval_task", "dim", "rms"}, {}};
  for (std::size_t tr = 0; tr < m.train_sets.size(); ++tr) {
    for (std::size_t e = 0; e < m.eval_tasks.size(); ++e) {
      for (std::size_t d = 0; d < traj::kPrivDim; ++d) {
        t.rows.push_back({m.train_sets[tr], m.eval_tasks[e], std::string(traj::kPrivNames[d]),
                          format_double(m.cell(e, tr)[d])});
      }
    }
  }
  return t;
}

inline CsvTable ablation_csv(const eval::AblationReport& rep) {
  CsvTable t{{"ablation", "variant", "seed", "dim", "rms"}, {}};
  for (const auto& r : rep.rows) {
    for (std::size_t d = 0; d < traj::kPrivDim; ++d) {
      t.rows.push_back({std::string(eval::ablation_name(rep.kind)), r.variant, std::to_string(r.seed),
                        std::string(traj::kPrivNames[d]), format_double(r.rms[d])});
    }
  }
  return t;
}

inline CsvTable loss_csv(std::span<const double> trace) {
  CsvTable t{{"iter", "loss"}, {}};
  for (std::size_t i = 0; i < trace.size(); ++i) t.rows.push_back({std::to_string(i), format_double(trace[i])});
  return t;
}

/// One row per step: the height estimate, the raw flag and whether the step
/// is the reported trigger.
inline CsvTable reset_csv(std::span<const traj::Trajectory> trajs, std::span<const std::vector<double>> h_est,
                          std::span<const reset::MonitorResult> results) {
  CsvTable t{{"trajectory", "step", "h_est", "flag", "trigger"}, {}};
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t s = 0; s < trajs[i].length(); ++s) {
      t.rows.push_back({std::to_string(i), std::to_string(s), format_double(h_est[i][s]),
                        results[i].flags[s] ? "1" : "0", results[i].trigger == s ? "1" : "0"});
    }
  }
  return t;
}

}  // namespace setest::io
