#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vnl/linalg.hpp"

namespace vnl::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lo;  // optional band, same length as x
  std::vector<double> hi;
  bool dashed = false;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::optional<double> y_min;
  std::optional<double> y_max;
};

std::string line_plot(const std::vector<Series>& series, const Axes& axes);

/// Grayscale cells. With black_is_high, value vmax renders black.
std::string heatmap(const Eigen::Ref<const Matrix>& values, double vmin, double vmax, const std::string& title,
                    bool black_is_high = true, const std::vector<std::string>& row_labels = {},
                    const std::vector<std::string>& col_labels = {});

struct Box {
  std::string label;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

Box box_stats(const std::string& label, const std::vector<double>& values);
std::string box_plot(const std::vector<Box>& boxes, const Axes& axes);

struct HistogramGroup {
  std::string label;
  std::vector<double> values;
};

/// Overlaid step histograms on shared bins over [lo, hi].
std::string histogram(const std::vector<HistogramGroup>& groups, double lo, double hi, int bins, const Axes& axes);

void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vnl::svg
