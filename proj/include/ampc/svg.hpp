#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ampc::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  std::string dash;     // stroke-dasharray, empty for solid
  bool step = false;    // hold each value until the next sample
};

struct Marker {
  double x = 0.0;
  std::string label;
};

struct Plot {
  std::string title, x_label, y_label;
  std::vector<Series> series;
  std::vector<Marker> markers;
  int width = 720;
  int height = 420;
};

struct Range {
  double lo = 0.0, hi = 1.0;
  double span() const { return hi - lo; }
};

/// Data extrema widened by `margin` of the span on each side.
inline Range padded_range(double lo, double hi, double margin = 0.05) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi < lo) std::swap(lo, hi);
  double span = hi - lo;
  if (span <= 0.0) {
    const double half = std::max(1e-3, 0.05 * std::abs(lo));
    return {lo - half, hi + half};
  }
  return {lo - margin * span, hi + margin * span};
}

inline std::vector<double> nice_ticks(const Range& r, int target = 6) {
  const double raw = r.span() / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double v = std::ceil(r.lo / step) * step; v <= r.hi + 1e-9 * step; v += step) {
    ticks.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  }
  return ticks;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

struct Extents {
  Range x, y;
};

inline Extents plot_extents(const Plot& p) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : p.series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  return {padded_range(x0, x1), padded_range(y0, y1)};
}

/// Static SVG 1.1 line chart with axes, ticks, labels, legend and
/// vertical event markers.
inline std::string render(const Plot& p) {
  const Extents e = plot_extents(p);
  const double left = 70, right = 20, top = 40, bottom = 55;
  const double pw = p.width - left - right, ph = p.height - top - bottom;
  auto sx = [&](double x) { return left + (x - e.x.lo) / e.x.span() * pw; };
  auto sy = [&](double y) { return top + (e.y.hi - y) / e.y.span() * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << p.width << "\" height=\"" << p.height
    << "\" viewBox=\"0 0 " << p.width << " " << p.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << p.width << "\" height=\"" << p.height << "\" fill=\"white\"/>\n"
    << "<text x=\"" << p.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(p.title)
    << "</text>\n";

  o << "<g class=\"axes\" stroke=\"#333\" fill=\"none\">\n"
    << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph << "\"/>\n"
    << "</g>\n<g class=\"ticks\" font-size=\"11\">\n";
  for (double t : nice_ticks(e.x)) {
    o << "<line x1=\"" << sx(t) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(t) << "\" y2=\"" << top + ph + 5
      << "\" stroke=\"#333\"/>\n<text x=\"" << sx(t) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << fmt(t) << "</text>\n";
  }
  for (double t : nice_ticks(e.y)) {
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << sy(t) << "\" x2=\"" << left << "\" y2=\"" << sy(t)
      << "\" stroke=\"#333\"/>\n<line x1=\"" << left << "\" y1=\"" << sy(t) << "\" x2=\"" << left + pw << "\" y2=\""
      << sy(t) << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 8 << "\" y=\"" << sy(t) + 4
      << "\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
  }
  o << "</g>\n"
    << "<text x=\"" << left + pw / 2 << "\" y=\"" << p.height - 12 << "\" text-anchor=\"middle\">"
    << escape(p.x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << top + ph / 2 << ")\">" << escape(p.y_label) << "</text>\n";

  o << "<g class=\"markers\" stroke=\"#888\" stroke-dasharray=\"4 3\">\n";
  for (const auto& m : p.markers) {
    if (m.x < e.x.lo || m.x > e.x.hi) continue;
    o << "<line x1=\"" << sx(m.x) << "\" y1=\"" << top << "\" x2=\"" << sx(m.x) << "\" y2=\"" << top + ph
      << "\"><title>" << escape(m.label) << "</title></line>\n";
  }
  o << "</g>\n";

  o << "<g class=\"series\" fill=\"none\" stroke-width=\"1.5\">\n";
  for (const auto& s : p.series) {
    std::ostringstream pts;
    bool first = true;
    double prev_y = 0.0;
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (s.step && !first) pts << sx(s.x[i]) << "," << sy(prev_y) << " ";
      pts << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
      prev_y = s.y[i];
      first = false;
    }
    o << "<polyline stroke=\"" << s.color << "\"";
    if (!s.dash.empty()) o << " stroke-dasharray=\"" << s.dash << "\"";
    o << " points=\"" << pts.str() << "\"/>\n";
  }
  o << "</g>\n";

  o << "<g class=\"legend\">\n";
  double ly = top + 14;
  for (const auto& s : p.series) {
    const double lx = left + pw - 150;
    o << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 24 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (!s.dash.empty()) o << " stroke-dasharray=\"" << s.dash << "\"";
    o << "/>\n<text x=\"" << lx + 30 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
    ly += 16;
  }
  if (!p.markers.empty()) {
    const double lx = left + pw - 150;
    o << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 24 << "\" y2=\"" << ly - 4
      << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n<text x=\"" << lx + 30 << "\" y=\"" << ly
      << "\">event</text>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

inline void write(const Plot& p, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write plot: " + path);
  out << render(p);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace ampc::svg
