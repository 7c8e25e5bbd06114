#include "vnl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vnl/training.hpp"

namespace vnl::svg {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  bool log_x;

  double px(double x) const {
    const double t = log_x ? (std::log10(x) - std::log10(x0)) / (std::log10(x1) - std::log10(x0)) : (x - x0) / (x1 - x0);
    return kLeft + t * (kWidth - kLeft - kRight);
  }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string header(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  return o.str();
}

std::string axes_markup(const Frame& f, const Axes& a) {
  std::ostringstream o;
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left << "\" height=\"" << bottom - top
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << left - 6 << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
    const double xv = f.log_x ? std::pow(10.0, std::log10(f.x0) + (std::log10(f.x1) - std::log10(f.x0)) * i / 4.0)
                              : f.x0 + (f.x1 - f.x0) * i / 4.0;
    o << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">" << num(xv)
      << "</text>\n";
  }
  o << "<text x=\"" << (left + right) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
    << escape(a.x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << (top + bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(a.y_label) << "</text>\n";
  return o.str();
}

}  // namespace

std::string line_plot(const std::vector<Series>& series, const Axes& axes) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double x : s.x) x0 = std::min(x0, x), x1 = std::max(x1, x);
    for (double y : s.y) y0 = std::min(y0, y), y1 = std::max(y1, y);
    for (double y : s.lo) y0 = std::min(y0, y);
    for (double y : s.hi) y1 = std::max(y1, y);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (axes.y_min) y0 = *axes.y_min;
  if (axes.y_max) y1 = *axes.y_max;
  if (y1 == y0) y1 = y0 + 1;
  const Frame f{x0, x1, y0, y1, axes.log_x};

  std::ostringstream o;
  o << header(axes.title) << axes_markup(f, axes);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (!s.lo.empty() && s.lo.size() == s.x.size() && s.hi.size() == s.x.size()) {
      o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << num(f.px(s.x[i])) << ',' << num(f.py(s.hi[i])) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;) o << num(f.px(s.x[i])) << ',' << num(f.py(s.lo[i])) << ' ';
      o << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
      << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) o << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
    o << "\"/>\n";
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    o << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kWidth - kRight + 30 << "\" y2=\""
      << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"5,3\"" : "")
      << "/>\n<text x=\"" << kWidth - kRight + 35 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap(const Eigen::Ref<const Matrix>& values, double vmin, double vmax, const std::string& title,
                    bool black_is_high, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels) {
  const double side = std::min(kWidth - kLeft - kRight, kHeight - kTop - kBottom);
  const double cw = values.cols() ? side / static_cast<double>(values.cols()) : side;
  const double ch = values.rows() ? side / static_cast<double>(values.rows()) : side;
  const double span = vmax > vmin ? vmax - vmin : 1.0;
  std::ostringstream o;
  o << header(title);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      double t = std::clamp((values(i, j) - vmin) / span, 0.0, 1.0);
      if (!std::isfinite(values(i, j))) t = 0.0;
      const int g = static_cast<int>(std::lround(255.0 * (black_is_high ? 1.0 - t : t)));
      o << "<rect x=\"" << num(kLeft + cw * static_cast<double>(j)) << "\" y=\"" << num(kTop + ch * static_cast<double>(i))
        << "\" width=\"" << num(cw) << "\" height=\"" << num(ch) << "\" fill=\"rgb(" << g << ',' << g << ',' << g
        << ")\"/>\n";
    }
  }
  for (std::size_t i = 0; i < row_labels.size(); ++i)
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(kTop + ch * (static_cast<double>(i) + 0.5) + 4)
      << "\" text-anchor=\"end\">" << escape(row_labels[i]) << "</text>\n";
  for (std::size_t j = 0; j < col_labels.size(); ++j)
    o << "<text x=\"" << num(kLeft + cw * (static_cast<double>(j) + 0.5)) << "\" y=\"" << num(kTop + side + 16)
      << "\" text-anchor=\"middle\">" << escape(col_labels[j]) << "</text>\n";
  // Color scale.
  const double sx = kLeft + side + 30;
  for (int k = 0; k < 20; ++k) {
    const double t = 1.0 - k / 19.0;
    const int g = static_cast<int>(std::lround(255.0 * (black_is_high ? 1.0 - t : t)));
    o << "<rect x=\"" << sx << "\" y=\"" << num(kTop + side * k / 20.0) << "\" width=\"16\" height=\"" << num(side / 20.0 + 0.5)
      << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
  }
  o << "<rect x=\"" << sx << "\" y=\"" << kTop << "\" width=\"16\" height=\"" << num(side)
    << "\" fill=\"none\" stroke=\"black\"/>\n"
    << "<text x=\"" << sx + 22 << "\" y=\"" << kTop + 10 << "\">" << num(vmax) << "</text>\n"
    << "<text x=\"" << sx + 22 << "\" y=\"" << num(kTop + side) << "\">" << num(vmin) << "</text>\n</svg>\n";
  return o.str();
}

Box box_stats(const std::string& label, const std::vector<double>& values) {
  Box b;
  b.label = label;
  if (values.empty()) {
    b.min = b.q1 = b.median = b.q3 = b.max = std::numeric_limits<double>::quiet_NaN();
    return b;
  }
  b.min = *std::min_element(values.begin(), values.end());
  b.max = *std::max_element(values.begin(), values.end());
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  return b;
}

std::string box_plot(const std::vector<Box>& boxes, const Axes& axes) {
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& b : boxes)
    if (std::isfinite(b.min)) y0 = std::min(y0, b.min), y1 = std::max(y1, b.max);
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (axes.y_min) y0 = *axes.y_min;
  if (axes.y_max) y1 = *axes.y_max;
  if (y1 == y0) y1 = y0 + 1;
  const Frame f{0.0, static_cast<double>(std::max<std::size_t>(1, boxes.size())), y0, y1, false};
  std::ostringstream o;
  o << header(axes.title);
  Axes no_x = axes;
  o << axes_markup(f, no_x);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box& b = boxes[k];
    const double cx = f.px(static_cast<double>(k) + 0.5);
    const double hw = 0.25 * (f.px(1.0) - f.px(0.0));
    o << "<text x=\"" << num(cx) << "\" y=\"" << kHeight - kBottom + 32 << "\" text-anchor=\"middle\">"
      << escape(b.label) << "</text>\n";
    if (!std::isfinite(b.median)) continue;
    o << "<line x1=\"" << num(cx) << "\" y1=\"" << num(f.py(b.min)) << "\" x2=\"" << num(cx) << "\" y2=\""
      << num(f.py(b.max)) << "\" stroke=\"black\"/>\n"
      << "<rect x=\"" << num(cx - hw) << "\" y=\"" << num(f.py(b.q3)) << "\" width=\"" << num(2 * hw) << "\" height=\""
      << num(std::max(0.5, f.py(b.q1) - f.py(b.q3))) << "\" fill=\"" << kPalette[k % std::size(kPalette)]
      << "\" fill-opacity=\"0.4\" stroke=\"black\"/>\n"
      << "<line x1=\"" << num(cx - hw) << "\" y1=\"" << num(f.py(b.median)) << "\" x2=\"" << num(cx + hw) << "\" y2=\""
      << num(f.py(b.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string histogram(const std::vector<HistogramGroup>& groups, double lo, double hi, int bins, const Axes& axes) {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("histogram: need bins >= 1 and hi > lo");
  std::vector<Series> series;
  const double w = (hi - lo) / bins;
  for (const auto& g : groups) {
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (double v : g.values) {
      if (!std::isfinite(v)) continue;
      const int b = std::clamp(static_cast<int>((v - lo) / w), 0, bins - 1);
      counts[static_cast<std::size_t>(b)] += 1.0;
    }
    Series s;
    s.label = g.label;
    for (int b = 0; b < bins; ++b) {
      s.x.push_back(lo + w * b);
      s.y.push_back(counts[static_cast<std::size_t>(b)]);
      s.x.push_back(lo + w * (b + 1));
      s.y.push_back(counts[static_cast<std::size_t>(b)]);
    }
    series.push_back(std::move(s));
  }
  Axes a = axes;
  if (!a.y_min) a.y_min = 0.0;
  return line_plot(series, a);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace vnl::svg
