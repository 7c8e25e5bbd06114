#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vnl/data.hpp"
#include "vnl/initializers.hpp"
#include "vnl/network.hpp"

namespace vnl {

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { SGD, SGDMomentum, Adam, RMSProp };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::SGD;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-8;

  void validate() const;
};

/// Per-parameter moment buffers, allocated on the first step.
struct OptimizerState {
  OptimizerSpec spec;
  long steps = 0;
  std::vector<Eigen::ArrayXd> first;
  std::vector<Eigen::ArrayXd> second;

  explicit OptimizerState(OptimizerSpec s) : spec(s) { spec.validate(); }
};

/// One update of every trainable parameter of `net`. Householder layers
/// update their reflection vectors and are re-materialized.
void step(OptimizerState& state, const Gradients& grads, Network& net);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Matrix grad;        // (softmax - onehot) / batch
};

LossResult softmax_cross_entropy(const Eigen::Ref<const Matrix>& logits, const std::vector<int>& labels);

double accuracy(const Eigen::Ref<const Matrix>& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainRecord {
  int epoch = 0;  // 0 is the untrained network
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double vni = 0.0;
  Vector per_layer_gain;
  double input_grad_log_norm = 0.0;  // log10 |dLoss/dx_0|^2 on the probe
  double orthogonality_error = 0.0;  // max |W^T W - I| over reflector layers
  bool converged = false;            // filled in after an early stop
};

enum class SuccessMetric { TrainAccuracy, TestAccuracy };

std::string to_string(SuccessMetric metric);
SuccessMetric parse_success_metric(std::string_view name);

struct SuccessCriterion {
  SuccessMetric metric = SuccessMetric::TestAccuracy;
  double threshold = 0.99;
  int max_epochs = 100;

  void validate() const;
  /// Metric strictly above threshold on a trained epoch (1..max_epochs).
  bool met(const TrainRecord& record) const;
};

struct TrainConfig {
  NetworkSpec network;  // input_dim and num_classes are taken from the data
  InitializerSpec init;
  OptimizerSpec optimizer;
  SuccessCriterion success;
  int epochs = 100;
  int batch_size = 100;
  int repeats = 1;  // passes over the training set per epoch
  bool early_stop = false;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  bool success = false;
  int success_epoch = -1;
  bool diverged = false;
  std::string failure_reason;  // "diverged" or empty
  Network network;
};

/// Trains a freshly initialized network. The probe must be labeled; it
/// feeds the VNI, per-layer gain and input-gradient instruments.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& test_set, const Dataset& probe);

/// Same loop starting from a given network.
TrainResult train(const TrainConfig& config, Network net, const Dataset& train_set, const Dataset& test_set,
                  const Dataset& probe);

/// Instruments a network without training it (the epoch-0 record).
TrainRecord evaluate(const Network& net, int epoch, const Dataset& train_set, const Dataset& test_set,
                     const Dataset& probe);

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Linear-interpolation quantile (p in [0, 1]) of a nonempty sample.
double quantile(std::vector<double> values, double p);

struct EpochQuartiles {
  int epoch = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

/// Per-epoch quartiles of VNI across runs. Runs must share their epochs.
std::vector<EpochQuartiles> quartile_dynamics(const std::vector<std::vector<TrainRecord>>& runs);

}  // namespace vnl
