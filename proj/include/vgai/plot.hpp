#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vgai/io.hpp"

namespace vgai::plot {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", std::isfinite(v) ? v : 0.0);
  return buf;
}

inline std::string escape(const std::string& s) {
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

inline std::string meta(const std::string& hash) {
  return "<!-- vgai-plot format_version=" + std::to_string(io::kFormatVersion) + " config_hash=" + hash + " -->\n";
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return colors[i % 8];
}

struct Box {
  double x0, y0, x1, y1;
  void grow(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x); y0 = std::min(y0, y);
    x1 = std::max(x1, x); y1 = std::max(y1, y);
  }
  void pad() {
    if (x0 > x1) { x0 = -1; x1 = 1; y0 = -1; y1 = 1; }
    const double span = std::max({x1 - x0, y1 - y0, 1e-6});
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1), h = 0.55 * span + 0.5;
    x0 = cx - h; x1 = cx + h; y0 = cy - h; y1 = cy + h;
  }
};

}  // namespace detail

struct TrajectoryPlotOptions {
  double panel_size = 420.0;
  std::size_t snapshots = 3;  // evenly spaced times marked with velocity arrows
  double arrow_scale = 0.15;  // seconds of travel drawn per arrow
};

/// One panel per trajectory: agent paths, positions at a few snapshot times
/// and velocity arrows at each.
inline std::string trajectory_svg(const std::vector<io::TrajectoryFile>& panels, const std::vector<std::string>& titles,
                                  const TrajectoryPlotOptions& opt = {}) {
  if (panels.empty()) throw Error("plot: no trajectories given");
  using detail::num;
  const double s = opt.panel_size;
  const double header = 28.0;
  std::ostringstream os;
  const std::size_t count = std::max<std::size_t>(1, panels.size());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(s * count) << "\" height=\"" << num(s + header)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << detail::meta(panels.front().header.config_hash);
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& f = panels[p];
    std::map<int, std::vector<const io::TrajectoryRow*>> by_agent;
    std::vector<std::int64_t> times;
    detail::Box box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& r : f.rows) {
      by_agent[r.agent].push_back(&r);
      times.push_back(r.t);
      box.grow(r.rx, r.ry);
    }
    box.pad();
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    std::vector<std::int64_t> marks;
    if (!times.empty()) {
      const std::size_t n = std::max<std::size_t>(1, opt.snapshots);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t idx = n == 1 ? times.size() - 1 : k * (times.size() - 1) / (n - 1);
        if (marks.empty() || marks.back() != times[idx]) marks.push_back(times[idx]);
      }
    }
    const double ox = s * static_cast<double>(p);
    const double scale = (s - 20.0) / (box.x1 - box.x0);
    auto px = [&](double x) { return ox + 10.0 + (x - box.x0) * scale; };
    auto py = [&](double y) { return header + 10.0 + (box.y1 - y) * scale; };

    const std::string title = p < titles.size() ? titles[p] : f.header.controller;
    os << "<text x=\"" << num(ox + 10) << "\" y=\"18\">" << detail::escape(title) << " (seed " << f.header.seed
       << ", cost " << num(f.header.normalized_cost) << ")</text>\n";
    os << "<rect x=\"" << num(ox + 5) << "\" y=\"" << num(header + 5) << "\" width=\"" << num(s - 10)
       << "\" height=\"" << num(s - 10) << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
    for (const auto& [agent, rows] : by_agent) {
      os << "<polyline fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"0.8\" points=\"";
      for (std::size_t i = 0; i < rows.size(); ++i) os << (i ? " " : "") << num(px(rows[i]->rx)) << "," << num(py(rows[i]->ry));
      os << "\"/>\n";
    }
    for (std::size_t m = 0; m < marks.size(); ++m) {
      const char* color = detail::palette(m);
      for (const auto& [agent, rows] : by_agent) {
        for (const auto* r : rows) {
          if (r->t != marks[m]) continue;
          os << "<circle cx=\"" << num(px(r->rx)) << "\" cy=\"" << num(py(r->ry)) << "\" r=\"2.5\" fill=\"" << color
             << "\"/>\n";
          os << "<line x1=\"" << num(px(r->rx)) << "\" y1=\"" << num(py(r->ry)) << "\" x2=\""
             << num(px(r->rx + opt.arrow_scale * r->vx)) << "\" y2=\"" << num(py(r->ry + opt.arrow_scale * r->vy))
             << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
        }
      }
      os << "<text x=\"" << num(ox + 12) << "\" y=\"" << num(header + s - 14 - 14.0 * static_cast<double>(marks.size() - 1 - m))
         << "\" fill=\"" << color << "\">t=" << marks[m] << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

/// Median normalized cost against the swept value, one line per controller,
/// with interquartile bars and the flocking threshold.
inline std::string cost_curve_svg(const std::vector<io::SweepTableRow>& rows, const std::string& config_hash) {
  if (rows.empty()) throw Error("plot: sweep table has no rows");
  using detail::num;
  const double w = 520, h = 360, left = 60, right = 150, top = 30, bottom = 45;
  std::map<std::string, std::vector<const io::SweepTableRow*>> series;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymax = kFlockingThreshold;
  std::string axis = rows.empty() ? "" : rows.front().axis;
  for (const auto& r : rows) {
    series[r.controller].push_back(&r);
    xmin = std::min(xmin, r.value);
    xmax = std::max(xmax, r.value);
    if (std::isfinite(r.q3)) ymax = std::max(ymax, r.q3);
  }
  if (rows.empty()) { xmin = 0; xmax = 1; }
  if (xmax == xmin) { xmin -= 1; xmax += 1; }
  ymax *= 1.1;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (w - left - right); };
  auto py = [&](double y) { return top + (1.0 - std::min(y, ymax) / ymax) * (h - top - bottom); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << detail::meta(config_hash);
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << num(left) << "\" y1=\"" << num(h - bottom) << "\" x2=\"" << num(w - right) << "\" y2=\""
     << num(h - bottom) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\"" << num(h - bottom)
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymax * i / 4.0;
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\">" << num(y)
       << "</text>\n";
  }
  std::vector<double> ticks;
  for (const auto& r : rows) ticks.push_back(r.value);
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double x : ticks) {
    os << "<text x=\"" << num(px(x)) << "\" y=\"" << num(h - bottom + 16) << "\" text-anchor=\"middle\">" << num(x)
       << "</text>\n";
  }
  os << "<text x=\"" << num((left + w - right) / 2) << "\" y=\"" << num(h - 8) << "\" text-anchor=\"middle\">"
     << detail::escape(axis) << "</text>\n";
  os << "<text x=\"14\" y=\"" << num((top + h - bottom) / 2) << "\" transform=\"rotate(-90 14 "
     << num((top + h - bottom) / 2) << ")\" text-anchor=\"middle\">normalized cost</text>\n";
  os << "<line x1=\"" << num(left) << "\" y1=\"" << num(py(kFlockingThreshold)) << "\" x2=\"" << num(w - right)
     << "\" y2=\"" << num(py(kFlockingThreshold)) << "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";

  std::size_t idx = 0;
  for (const auto& [name, pts] : series) {
    auto sorted = pts;
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->value < b->value; });
    const char* color = detail::palette(idx);
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < sorted.size(); ++i) os << (i ? " " : "") << num(px(sorted[i]->value)) << "," << num(py(sorted[i]->median));
    os << "\"/>\n";
    for (const auto* r : sorted) {
      os << "<line x1=\"" << num(px(r->value)) << "\" y1=\"" << num(py(r->q1)) << "\" x2=\"" << num(px(r->value))
         << "\" y2=\"" << num(py(r->q3)) << "\" stroke=\"" << color << "\"/>\n";
      os << "<circle cx=\"" << num(px(r->value)) << "\" cy=\"" << num(py(r->median)) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    }
    const double ly = top + 16.0 * static_cast<double>(idx);
    os << "<rect x=\"" << num(w - right + 12) << "\" y=\"" << num(ly) << "\" width=\"10\" height=\"10\" fill=\"" << color
       << "\"/>\n";
    os << "<text x=\"" << num(w - right + 26) << "\" y=\"" << num(ly + 9) << "\">" << detail::escape(name) << "</text>\n";
    ++idx;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace vgai::plot
