#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "vnl/linalg.hpp"
#include "vnl/rng.hpp"

namespace vnl {

/// One sample per row. Unlabeled datasets (probes) have empty `labels` and
/// num_classes == 0.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  bool labeled() const { return !labels.empty(); }

  /// First n samples (all of them when n exceeds size()).
  Dataset take(Eigen::Index n) const;
  void validate() const;
};

enum class SyntheticTask { AND2, AND4, XOR2 };

std::string to_string(SyntheticTask task);
SyntheticTask parse_synthetic_task(std::string_view name);

/// Exhaustive truth table with bits encoded as -1/+1.
///   AND2: x0 AND x1.  AND4: 2 (x0 AND x1) + (x2 AND x3).  XOR2: x0 XOR x1.
Dataset synthetic_task(SyntheticTask task);

/// n_samples x dim i.i.d. N(0, sigma_x_sq) entries, unlabeled.
Dataset gaussian_probe(Eigen::Index n_samples, Eigen::Index dim, double sigma_x_sq, Rng& rng);

struct MnistOptions {
  bool scale = true;   // pixel / 255
  bool center = true;  // subtract the per-pixel mean of this file
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Throws FormatError on bad magic, truncation, count mismatch or labels
/// outside 0-9; nothing is returned partially.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       const MnistOptions& options = {});

/// `label,x0,x1,...` with a header line.
void write_dataset_csv(std::ostream& out, const Dataset& data);

/// Binary sidecar: "VNLD", u32 version, name, num_classes, matrix, labels.
void save_dataset(std::ostream& out, const Dataset& data);
Dataset load_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace vnl
