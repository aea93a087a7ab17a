#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "setest/errors.hpp"
#include "setest/io/csv.hpp"
#include "setest/io/keyvalue.hpp"

namespace setest::io {

enum class PlotKind { loss_curve, error_bars, heatmap };

inline PlotKind parse_plot_kind(std::string_view s) {
  if (s == "loss-curve") return PlotKind::loss_curve;
  if (s == "error-bars") return PlotKind::error_bars;
  if (s == "heatmap") return PlotKind::heatmap;
  throw ContractError("unknown plot kind '" + std::string(s) + "' (expected loss-curve, error-bars or heatmap)");
}

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string text(double x, double y, std::string_view s, std::string_view anchor = "middle",
                        int size = 12, std::string_view extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + std::string(anchor) + "\"" + std::string(extra) + ">" + escape(s) + "</text>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, std::string_view stroke = "#000") {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
         "\" stroke=\"" + std::string(stroke) + "\"/>\n";
}

inline std::string rect(double x, double y, double w, double h, std::string_view fill, std::string_view cls = "") {
  return "<rect" + (cls.empty() ? std::string() : " class=\"" + std::string(cls) + "\"") + " x=\"" + num(x) +
         "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" fill=\"" + std::string(fill) +
         "\"/>\n";
}

inline std::string open(int w, int h, std::string_view title) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\" font-family=\"sans-serif\">\n" + rect(0, 0, w, h, "#fff") +
         text(w / 2.0, 22, title, "middle", 15);
}

inline const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7"};

/// Linear interpolation from white-ish yellow to dark blue.
inline std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double a[3] = {255, 247, 188}, b[3] = {8, 48, 107};
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(a[0] + (b[0] - a[0]) * t),
                static_cast<int>(a[1] + (b[1] - a[1]) * t), static_cast<int>(a[2] + (b[2] - a[2]) * t));
  return buf;
}

/// Vertical axis with five ticks mapped to [y_bottom, y_top].
struct Axis {
  double lo, hi;
  bool log;
  double px_lo, px_hi;

  double map(double v) const {
    const double a = log ? std::log10(lo) : lo, b = log ? std::log10(hi) : hi;
    const double x = log ? std::log10(v) : v;
    return px_lo + (x - a) / (b - a) * (px_hi - px_lo);
  }
  double tick(int i) const {
    const double f = i / 4.0;
    return log ? std::pow(10.0, std::log10(lo) + f * (std::log10(hi) - std::log10(lo))) : lo + f * (hi - lo);
  }
};

/// Range that always has positive width.
inline std::pair<double, double> padded(double lo, double hi) {
  if (hi > lo) return {lo, hi};
  const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
  return {lo - pad, hi + pad};
}

inline double cell_number(const std::string& s, std::string_view column) {
  try {
    return parse_double(s, column);
  } catch (const ConfigError&) {
    throw FormatError("CSV column '" + std::string(column) + "' holds non-numeric value '" + s + "'");
  }
}

inline std::string loss_curve(const CsvTable& t) {
  const std::size_t ci = t.column("iter"), cl = t.column("loss");
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : t.rows) pts.emplace_back(cell_number(r[ci], "iter"), cell_number(r[cl], "loss"));
  double xmin = pts.front().first, xmax = xmin, ymin = pts.front().second, ymax = ymin;
  for (auto [x, y] : pts) {
    xmin = std::min(xmin, x), xmax = std::max(xmax, x), ymin = std::min(ymin, y), ymax = std::max(ymax, y);
  }
  const bool log = ymin > 0.0 && ymax / ymin > 100.0;
  std::tie(xmin, xmax) = padded(xmin, xmax);
  if (!log) std::tie(ymin, ymax) = padded(ymin, ymax);
  const int W = 640, H = 400;
  const double L = 70, R = W - 20, T = 40, B = H - 50;
  const Axis ay{ymin, ymax, log, B, T};
  auto mx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (R - L); };
  std::string s = open(W, H, log ? "Training loss (log scale)" : "Training loss");
  s += line(L, B, R, B) + line(L, B, L, T);
  for (int i = 0; i <= 4; ++i) {
    const double yv = ay.tick(i), xv = xmin + i / 4.0 * (xmax - xmin);
    s += line(L - 4, ay.map(yv), L, ay.map(yv)) + text(L - 6, ay.map(yv) + 4, num(yv), "end", 10);
    s += line(mx(xv), B, mx(xv), B + 4) + text(mx(xv), B + 16, num(xv), "middle", 10);
  }
  s += text((L + R) / 2, H - 12, "iteration") + text(16, (T + B) / 2, "loss", "middle", 12,
                                                    " transform=\"rotate(-90 16 " + num((T + B) / 2) + ")\"");
  s += "<polyline class=\"series\" fill=\"none\" stroke=\"" + std::string(kPalette[0]) + "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + num(mx(pts[i].first)) + "," + num(ay.map(pts[i].second));
  s += "\"/>\n</svg>\n";
  return s;
}

/// Bars of RMS per o' dimension, one bar per series. Ablation tables
/// (with a seed column) show the mean over seeds with +-1 std whiskers.
inline std::string error_bars(const CsvTable& t) {
  const std::size_t cd = t.column("dim"), cr = t.column("rms");
  const bool ablation = t.has("variant");
  std::vector<std::size_t> key_cols;
  if (ablation) {
    key_cols = {t.column("variant")};
  } else {
    key_cols = {t.column("model")};
    for (const char* c : {"dataset", "mode"}) {
      if (t.has(c)) key_cols.push_back(t.column(c));
    }
  }
  std::vector<std::string> series, dims;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& r : t.rows) {
    std::string key;
    for (auto c : key_cols) key += (key.empty() ? "" : " / ") + r[c];
    if (std::find(series.begin(), series.end(), key) == series.end()) series.push_back(key);
    if (std::find(dims.begin(), dims.end(), r[cd]) == dims.end()) dims.push_back(r[cd]);
    values[{key, r[cd]}].push_back(cell_number(r[cr], "rms"));
  }
  double ymax = 0.0;
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> stats;
  for (const auto& [k, v] : values) {
    double m = 0.0, sd = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) sd += (x - m) * (x - m);
    sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
    stats[k] = {m, sd};
    ymax = std::max(ymax, m + sd);
  }
  if (ymax <= 0.0) ymax = 1.0;
  const int W = 120 + 110 * static_cast<int>(dims.size()), H = 420;
  const double L = 70, R = W - 20, T = 40, B = H - 90;
  const Axis ay{0.0, ymax * 1.1, false, B, T};
  std::string s = open(W, H, ablation ? "RMS error (mean +- std over seeds)" : "RMS error per dimension");
  s += line(L, B, R, B) + line(L, B, L, T);
  for (int i = 0; i <= 4; ++i) {
    s += line(L - 4, ay.map(ay.tick(i)), L, ay.map(ay.tick(i))) +
         text(L - 6, ay.map(ay.tick(i)) + 4, num(ay.tick(i)), "end", 10);
  }
  const double group = (R - L) / static_cast<double>(dims.size());
  const double bw = group * 0.8 / static_cast<double>(series.size());
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const double gx = L + group * static_cast<double>(d) + group * 0.1;
    s += text(gx + group * 0.4, B + 16, dims[d]);
    for (std::size_t k = 0; k < series.size(); ++k) {
      const auto it = stats.find({series[k], dims[d]});
      if (it == stats.end()) continue;
      const auto [m, sd] = it->second;
      const double x = gx + bw * static_cast<double>(k);
      s += rect(x, ay.map(m), bw * 0.9, B - ay.map(m), kPalette[k % 8], "bar");
      if (sd > 0.0) {
        const double cx = x + bw * 0.45;
        s += line(cx, ay.map(m - sd), cx, ay.map(m + sd)) + line(cx - 3, ay.map(m + sd), cx + 3, ay.map(m + sd)) +
             line(cx - 3, ay.map(m - sd), cx + 3, ay.map(m - sd));
      }
    }
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double y = B + 34 + 14 * static_cast<double>(k);
    s += rect(L, y - 9, 10, 10, kPalette[k % 8]) + text(L + 16, y, series[k], "start", 11);
  }
  s += "</svg>\n";
  return s;
}

/// Evaluation tasks as rows, training sets as columns; each cell is split
/// into one annotated square per o' dimension.
inline std::string heatmap(const CsvTable& t) {
  const std::size_t ct = t.column("train_set"), ce = t.column("eval_task"), cd = t.column("dim"),
                    cr = t.column("rms");
  std::vector<std::string> trains, evals, dims;
  std::map<std::tuple<std::string, std::string, std::string>, double> v;
  double vmax = 0.0;
  auto note = [](std::vector<std::string>& list, const std::string& x) {
    if (std::find(list.begin(), list.end(), x) == list.end()) list.push_back(x);
  };
  for (const auto& r : t.rows) {
    note(trains, r[ct]), note(evals, r[ce]), note(dims, r[cd]);
    const double x = cell_number(r[cr], "rms");
    v[{r[ct], r[ce], r[cd]}] = x;
    vmax = std::max(vmax, x);
  }
  if (vmax <= 0.0) vmax = 1.0;
  const double sub = 46, cw = sub * static_cast<double>(dims.size()) + 10, ch = sub + 24;
  const double L = 100, T = 70;
  const int W = static_cast<int>(L + cw * static_cast<double>(trains.size()) + 20);
  const int H = static_cast<int>(T + ch * static_cast<double>(evals.size()) + 40);
  std::string s = open(W, H, "RMS error: training set (columns) vs evaluation task (rows)");
  for (std::size_t c = 0; c < trains.size(); ++c) {
    s += text(L + cw * static_cast<double>(c) + cw / 2, T - 12, "train: " + trains[c], "middle", 12);
  }
  for (std::size_t e = 0; e < evals.size(); ++e) {
    const double y = T + ch * static_cast<double>(e);
    s += text(L - 8, y + sub / 2 + 4, evals[e], "end", 12);
    for (std::size_t c = 0; c < trains.size(); ++c) {
      const double x = L + cw * static_cast<double>(c);
      s += "<g class=\"cell\" data-eval=\"" + escape(evals[e]) + "\" data-train=\"" + escape(trains[c]) + "\">\n";
      for (std::size_t d = 0; d < dims.size(); ++d) {
        const auto it = v.find({trains[c], evals[e], dims[d]});
        const double sx = x + sub * static_cast<double>(d);
        if (it == v.end()) {
          s += rect(sx, y, sub - 2, sub - 2, "#ddd");
          continue;
        }
        const double f = it->second / vmax;
        s += rect(sx, y, sub - 2, sub - 2, heat_color(f));
        s += text(sx + sub / 2 - 1, y + sub / 2 + 3, num(it->second), "middle", 9,
                  f > 0.55 ? " fill=\"#fff\"" : "");
        s += text(sx + sub / 2 - 1, y + sub + 10, dims[d], "middle", 9);
      }
      s += "</g>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace svg

inline std::string render_svg(const CsvTable& t, PlotKind kind) {
  if (t.rows.empty()) throw FormatError("CSV has a header but no data rows; nothing to plot");
  switch (kind) {
    case PlotKind::loss_curve: return svg::loss_curve(t);
    case PlotKind::error_bars: return svg::error_bars(t);
    case PlotKind::heatmap: return svg::heatmap(t);
  }
  throw ContractError("unknown plot kind");
}

/// Renders fully in memory first, so a failed render leaves no file behind.
inline void emit_plot_svg(const std::string& csv_path, PlotKind kind, const std::string& out_path) {
  const std::string doc = render_svg(read_csv(csv_path), kind);
  write_text_file(out_path, doc);
}

}  // namespace setest::io
