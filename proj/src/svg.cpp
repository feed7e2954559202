#include "qsp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "qsp/errors.hpp"

namespace qsp::svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Frame {
  double x0, x1, y0, y1;
  bool log_x, log_y;
  double left = 70, right = 150, top = 40, bottom = 55;
  int width, height;

  double tx(double v) const { return log_x ? std::log10(v) : v; }
  double ty(double v) const { return log_y ? std::log10(v) : v; }
  double px(double v) const { return left + (tx(v) - x0) / (x1 - x0) * (width - left - right); }
  double py(double v) const { return height - bottom - (ty(v) - y0) / (y1 - y0) * (height - top - bottom); }
  bool ok(double x, double y) const {
    return std::isfinite(x) && std::isfinite(y) && (!log_x || x > 0.0) && (!log_y || y > 0.0);
  }
};

void pad(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-300) {
    const double d = std::max(std::abs(lo) * 0.05, 1e-12);
    lo -= d;
    hi += d;
  } else {
    const double d = 0.04 * (hi - lo);
    lo -= d;
    hi += d;
  }
}

void header(std::ostringstream& o, const Frame& f, const Axes& axes) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
    << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(f.width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(axes.title) << "</text>\n";
}

void axes_and_ticks(std::ostringstream& o, const Frame& f, const Axes& axes) {
  const double L = f.left, R = f.width - f.right, T = f.top, B = f.height - f.bottom;
  o << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(R - L) << "\" height=\"" << num(B - T)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double tvx = f.x0 + (f.x1 - f.x0) * i / 5.0;
    const double vx = f.log_x ? std::pow(10.0, tvx) : tvx;
    const double X = f.px(vx);
    o << "<line x1=\"" << num(X) << "\" y1=\"" << num(B) << "\" x2=\"" << num(X) << "\" y2=\"" << num(B + 5)
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << num(X) << "\" y=\"" << num(B + 18) << "\" text-anchor=\"middle\">" << tick_label(vx)
      << "</text>\n";
    const double tvy = f.y0 + (f.y1 - f.y0) * i / 5.0;
    const double vy = f.log_y ? std::pow(10.0, tvy) : tvy;
    const double Y = f.py(vy);
    o << "<line x1=\"" << num(L - 5) << "\" y1=\"" << num(Y) << "\" x2=\"" << num(L) << "\" y2=\"" << num(Y)
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << num(L - 8) << "\" y=\"" << num(Y + 4) << "\" text-anchor=\"end\">" << tick_label(vy)
      << "</text>\n";
  }
  o << "<text x=\"" << num((L + R) / 2) << "\" y=\"" << num(f.height - 12.0) << "\" text-anchor=\"middle\">"
    << escape(axes.xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num((T + B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num((T + B) / 2) << ")\">" << escape(axes.ylabel) << "</text>\n";
}

void draw_series(std::ostringstream& o, const Frame& f, const std::vector<Series>& series) {
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& sr = series[s];
    const std::string color = sr.color.empty() ? kPalette[s % 8] : sr.color;
    const std::size_t n = std::min(sr.x.size(), sr.y.size());
    if (sr.line) {
      std::string path;
      bool pen = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (!f.ok(sr.x[i], sr.y[i])) {
          pen = false;
          continue;
        }
        path += (pen ? " L" : " M") + num(f.px(sr.x[i])) + ' ' + num(f.py(sr.y[i]));
        pen = true;
      }
      if (!path.empty()) {
        o << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\"";
        if (sr.dashed) o << " stroke-dasharray=\"6 4\"";
        o << "/>\n";
      }
    }
    if (sr.markers) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!f.ok(sr.x[i], sr.y[i])) continue;
        o << "<circle cx=\"" << num(f.px(sr.x[i])) << "\" cy=\"" << num(f.py(sr.y[i])) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
      }
    }
    const double ly = f.top + 14.0 + 18.0 * s;
    const double lx = f.width - f.right + 10.0;
    o << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 20) << "\" y2=\"" << num(ly)
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + 4) << "\">" << escape(sr.label) << "</text>\n";
  }
}

}  // namespace

std::string line_plot(const Axes& axes, const std::vector<Series>& series, int width, int height) {
  Frame f{};
  f.width = width;
  f.height = height;
  f.log_x = axes.log_x;
  f.log_y = axes.log_y;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!f.ok(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, f.tx(s.x[i]));
      x1 = std::max(x1, f.tx(s.x[i]));
      y0 = std::min(y0, f.ty(s.y[i]));
      y1 = std::max(y1, f.ty(s.y[i]));
    }
  }
  pad(x0, x1);
  pad(y0, y1);
  f.x0 = x0;
  f.x1 = x1;
  f.y0 = y0;
  f.y1 = y1;
  std::ostringstream o;
  header(o, f, axes);
  axes_and_ticks(o, f, axes);
  draw_series(o, f, series);
  o << "</svg>\n";
  return o.str();
}

std::string heatmap(const Axes& axes, const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::vector<std::vector<double>>& z, const std::vector<Series>& overlays, int width,
                    int height) {
  if (xs.empty() || ys.empty() || z.size() != ys.size()) throw PreconditionError("heatmap grid mismatch");
  Frame f{};
  f.width = width;
  f.height = height;
  f.log_x = false;
  f.log_y = false;
  auto edges = [](const std::vector<double>& v) {
    std::vector<double> e(v.size() + 1);
    if (v.size() == 1) {
      e[0] = v[0] - 0.5;
      e[1] = v[0] + 0.5;
      return e;
    }
    for (std::size_t i = 1; i < v.size(); ++i) e[i] = 0.5 * (v[i - 1] + v[i]);
    e[0] = v[0] - (e[1] - v[0]);
    e[v.size()] = v.back() + (v.back() - e[v.size() - 1]);
    return e;
  };
  const auto ex = edges(xs), ey = edges(ys);
  f.x0 = std::min(ex.front(), ex.back());
  f.x1 = std::max(ex.front(), ex.back());
  f.y0 = std::min(ey.front(), ey.back());
  f.y1 = std::max(ey.front(), ey.back());
  double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
  for (const auto& row : z)
    for (double v : row)
      if (std::isfinite(v)) {
        zmin = std::min(zmin, v);
        zmax = std::max(zmax, v);
      }
  if (!std::isfinite(zmin)) {
    zmin = 0.0;
    zmax = 1.0;
  }
  if (zmax - zmin < 1e-300) zmax = zmin + 1.0;
  std::ostringstream o;
  header(o, f, axes);
  for (std::size_t iy = 0; iy < ys.size(); ++iy) {
    if (z[iy].size() != xs.size()) throw PreconditionError("heatmap row length mismatch");
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      const double v = z[iy][ix];
      std::string fill = "#dddddd";
      if (std::isfinite(v)) {
        const double t = (v - zmin) / (zmax - zmin);
        const int r = static_cast<int>(std::lround(255 * t));
        const int b = static_cast<int>(std::lround(255 * (1 - t)));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x40%02x", r, b);
        fill = buf;
      }
      const double X0 = f.px(ex[ix]), X1 = f.px(ex[ix + 1]);
      const double Y0 = f.py(ey[iy]), Y1 = f.py(ey[iy + 1]);
      o << "<rect x=\"" << num(std::min(X0, X1)) << "\" y=\"" << num(std::min(Y0, Y1)) << "\" width=\""
        << num(std::abs(X1 - X0)) << "\" height=\"" << num(std::abs(Y1 - Y0)) << "\" fill=\"" << fill << "\"/>\n";
    }
  }
  axes_and_ticks(o, f, axes);
  draw_series(o, f, overlays);
  o << "<text x=\"" << num(f.width - f.right + 10.0) << "\" y=\"" << num(f.height - f.bottom) << "\">z: "
    << tick_label(zmin) << " .. " << tick_label(zmax) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

}  // namespace qsp::svg
