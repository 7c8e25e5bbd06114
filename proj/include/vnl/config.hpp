#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vnl/activations.hpp"
#include "vnl/initializers.hpp"
#include "vnl/training.hpp"

namespace vnl {

enum class ExperimentKind { VniSweep, Heatmap, Dynamics, TasksTable, Grid, OrthogonalTable, Diagnostics };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

/// Flat experiment description. Every field has a key of the same name in
/// the key=value file format; list-valued keys are comma separated.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::VniSweep;

  // network
  std::vector<int> depths{10};
  std::vector<int> widths{200};
  std::vector<Activation> activations{Activation::HardTanh};
  int input_dim = 0;  // 0: same as width (Gaussian probes only)

  // initialization
  std::vector<InitKind> inits{InitKind::ScaledGaussian};
  double sigma_w_sq = 0.0;  // 0: norm-preserving value for the activation
  int bottleneck_rank = 1;
  bool bottleneck_uniform = false;

  // optimization
  OptimizerKind optimizer = OptimizerKind::SGD;
  std::vector<double> learning_rates{0.01};
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-8;
  int epochs = 100;
  int batch_size = 100;
  bool early_stop = false;

  // success
  SuccessMetric success_metric = SuccessMetric::TestAccuracy;
  double success_threshold = 0.9;            // MNIST
  double synthetic_success_threshold = 0.99;  // truth-table tasks

  // data
  std::vector<std::string> tasks{"mnist"};  // mnist, and2, and4, xor2
  std::string probe = "gaussian";           // gaussian or mnist (VNI sweeps)
  std::string mnist_dir = "data/mnist";
  int mnist_train_size = 5000;
  int mnist_test_size = 10000;
  int probe_size = 1000;
  double sigma_x_sq = 0.1;
  int synthetic_repeats = 25;  // truth-table copies per epoch
  bool with_jacobian = true;
  std::vector<double> enn_epsilons{0.01, 0.1, 0.5, 0.9};

  // harness
  int runs = 20;
  std::uint64_t master_seed = 1;
  int threads = 1;
  std::string output_dir = "out";

  void validate() const;

  /// Canonical key=value text, one key per line, fixed order.
  std::string serialize() const;
  static ExperimentConfig parse(std::string_view text);
  /// Applies the assignments in `text` on top of the current values.
  void merge(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Applies one key=value assignment; throws on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// FNV-1a 64 over the canonical text without the keys that cannot change
  /// results (threads, output_dir), as 16 hex digits.
  std::string hash() const;
};

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::string_view bytes);

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace vnl
