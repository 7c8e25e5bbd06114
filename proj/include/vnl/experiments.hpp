#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vnl/config.hpp"
#include "vnl/data.hpp"
#include "vnl/training.hpp"

namespace vnl {

/// Seed of run `run` under `master_seed`; shared by every cell of a sweep.
std::uint64_t run_seed(std::uint64_t master_seed, int run);

/// sigma_w^2 from the config, or the norm-preserving value when it is 0.
double resolve_sigma_w_sq(const ExperimentConfig& config, Activation activation);

struct TaskData {
  Dataset train;
  Dataset test;
  Dataset probe;
  bool synthetic = false;
};

/// Train/test/probe sets for "mnist", "and2", "and4" or "xor2". MNIST uses
/// the first mnist_train_size training images, the first mnist_test_size
/// test images, and the first probe_size training images as probe.
TaskData load_task(const ExperimentConfig& config, const std::string& task);

/// Training configuration for one cell of an experiment.
TrainConfig make_train_config(const ExperimentConfig& config, const TaskData& data, int depth, int width,
                              Activation activation, InitKind init, double learning_rate, int run);

/// Per-(config hash, unit) result files under <output_dir>/cache/<hash>/.
class RunCache {
 public:
  RunCache(const std::filesystem::path& output_dir, const std::string& config_hash);
  std::optional<std::string> get(const std::string& unit) const;
  void put(const std::string& unit, const std::string& text) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Runs fn(i) for i in [0, n) on `threads` workers. Results are indexed by
/// i; an exception in one unit is captured as its error string.
struct UnitOutcome {
  std::string text;
  std::string error;  // empty on success
  bool cached = false;
};
std::vector<UnitOutcome> run_units(const std::vector<std::string>& unit_names, int threads, const RunCache& cache,
                                   const std::function<std::string(std::size_t)>& fn);

/// Run CSV (epoch, loss, train_acc, test_acc, vni, gain_min, gain_median,
/// gain_max, input_grad_log_norm, orthogonality_error) preceded by a status
/// comment line.
std::string serialize_run(const TrainResult& result);

struct RunSummary {
  std::vector<TrainRecord> records;  // per_layer_gain holds {min, median, max}
  bool success = false;
  int success_epoch = -1;
  bool diverged = false;

  double final_vni() const;
  double final_gain_median() const;
};
RunSummary parse_run(const std::string& text);

/// "# config_hash=<h> master_seed=<s>" line for CSV provenance.
std::string csv_provenance(const ExperimentConfig& config);

struct ExperimentOutcome {
  int units = 0;
  int failed_units = 0;  // units that threw; failed *training* is not counted
  int cached_units = 0;
  std::vector<std::filesystem::path> files;

  bool all_completed() const { return failed_units == 0; }
};

ExperimentOutcome run_vni_sweep(const ExperimentConfig& config);
ExperimentOutcome run_heatmap(const ExperimentConfig& config);
ExperimentOutcome run_dynamics(const ExperimentConfig& config);
ExperimentOutcome run_tasks_table(const ExperimentConfig& config);
ExperimentOutcome run_grid(const ExperimentConfig& config);
ExperimentOutcome run_orthogonal_table(const ExperimentConfig& config);
ExperimentOutcome run_diagnostics(const ExperimentConfig& config);

/// Dispatches on config.experiment.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

}  // namespace vnl
