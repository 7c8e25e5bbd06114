#include "vnl/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vnl/analysis.hpp"

namespace vnl {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD:
      return "sgd";
    case OptimizerKind::SGDMomentum:
      return "momentum";
    case OptimizerKind::Adam:
      return "adam";
    case OptimizerKind::RMSProp:
      return "rmsprop";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "momentum") return OptimizerKind::SGDMomentum;
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "rmsprop") return OptimizerKind::RMSProp;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

void OptimizerSpec::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("OptimizerSpec: learning_rate must be > 0");
  for (double r : {momentum, adam_beta1, adam_beta2, rmsprop_decay})
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("OptimizerSpec: decay and momentum must lie in [0, 1)");
  if (!(adam_eps > 0.0) || !(rmsprop_eps > 0.0)) throw std::invalid_argument("OptimizerSpec: eps must be > 0");
}

namespace {

template <typename P, typename G>
void check_shape(const P& p, const G& g, const char* what) {
  if (p.rows() != g.rows() || p.cols() != g.cols())
    throw DimensionError(std::string("step: ") + what + " gradient is " + shape_string(g.rows(), g.cols()) +
                         ", parameter is " + shape_string(p.rows(), p.cols()));
}

// Calls f(param, grad) as flat arrays for every trainable tensor, in a fixed order.
template <typename F>
void for_each_parameter(Network& net, const Gradients& grads, F&& f) {
  if (grads.layers.size() != net.layers.size() || grads.readout.has_value() != net.readout.has_value())
    throw DimensionError("step: gradients do not match the network's layers");
  auto visit = [&](auto& param, const auto& grad, const char* what) {
    check_shape(param, grad, what);
    Eigen::Map<Eigen::ArrayXd> p(param.data(), param.size());
    Eigen::Map<const Eigen::ArrayXd> g(grad.data(), grad.size());
    f(p, g);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    const LayerGradient& g = grads.layers[l];
    if (layer.reflectors) {
      if (!g.reflectors) throw DimensionError("step: missing reflector gradient");
      visit(layer.reflectors->vectors, *g.reflectors, "reflector");
    } else {
      visit(layer.weight, g.weight, "weight");
    }
    visit(layer.bias, g.bias, "bias");
  }
  if (net.readout) {
    visit(net.readout->weight, grads.readout->weight, "readout weight");
    visit(net.readout->bias, grads.readout->bias, "readout bias");
  }
}

}  // namespace

void step(OptimizerState& state, const Gradients& grads, Network& net) {
  const OptimizerSpec& s = state.spec;
  const double lr = s.learning_rate;
  const long t = ++state.steps;
  std::size_t slot = 0;
  for_each_parameter(net, grads, [&](Eigen::Map<Eigen::ArrayXd>& p, const Eigen::Map<const Eigen::ArrayXd>& g) {
    if (state.first.size() <= slot) {
      state.first.push_back(Eigen::ArrayXd::Zero(p.size()));
      state.second.push_back(Eigen::ArrayXd::Zero(p.size()));
    }
    Eigen::ArrayXd& m = state.first[slot];
    Eigen::ArrayXd& v = state.second[slot];
    if (m.size() != p.size()) throw DimensionError("step: optimizer state does not match the network");
    ++slot;
    switch (s.kind) {
      case OptimizerKind::SGD:
        p -= lr * g;
        break;
      case OptimizerKind::SGDMomentum:
        m = s.momentum * m + g;
        p -= lr * m;
        break;
      case OptimizerKind::Adam: {
        m = s.adam_beta1 * m + (1.0 - s.adam_beta1) * g;
        v = s.adam_beta2 * v + (1.0 - s.adam_beta2) * g.square();
        const double c1 = 1.0 - std::pow(s.adam_beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(s.adam_beta2, static_cast<double>(t));
        p -= lr * (m / c1) / ((v / c2).sqrt() + s.adam_eps);
        break;
      }
      case OptimizerKind::RMSProp:
        v = s.rmsprop_decay * v + (1.0 - s.rmsprop_decay) * g.square();
        p -= lr * g / (v.sqrt() + s.rmsprop_eps);
        break;
    }
  });
  for (Layer& layer : net.layers) layer.rematerialize();
}

LossResult softmax_cross_entropy(const Eigen::Ref<const Matrix>& logits, const std::vector<int>& labels) {
  const Eigen::Index batch = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (batch < 1) throw DimensionError("softmax_cross_entropy: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw DimensionError("softmax_cross_entropy: label count does not match batch");
  LossResult out;
  out.grad.resize(batch, classes);
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    const double max = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - max).exp().matrix();
    const double z = e.sum();
    total += std::log(z) - (logits(i, y) - max);
    out.grad.row(i) = e / z;
    out.grad(i, y) -= 1.0;
  }
  out.loss = total / static_cast<double>(batch);
  out.grad /= static_cast<double>(batch);
  return out;
}

double accuracy(const Eigen::Ref<const Matrix>& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw DimensionError("accuracy: label count does not match batch");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::string to_string(SuccessMetric metric) {
  return metric == SuccessMetric::TrainAccuracy ? "train_accuracy" : "test_accuracy";
}

SuccessMetric parse_success_metric(std::string_view name) {
  if (name == "train_accuracy") return SuccessMetric::TrainAccuracy;
  if (name == "test_accuracy") return SuccessMetric::TestAccuracy;
  throw std::invalid_argument("unknown success metric '" + std::string(name) + "'");
}

void SuccessCriterion::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("SuccessCriterion: threshold must lie in (0, 1]");
  if (max_epochs < 1) throw std::invalid_argument("SuccessCriterion: max_epochs must be >= 1");
}

bool SuccessCriterion::met(const TrainRecord& record) const {
  if (record.epoch < 1 || record.epoch > max_epochs) return false;
  const double value = metric == SuccessMetric::TrainAccuracy ? record.train_accuracy : record.test_accuracy;
  return value > threshold;
}

namespace {

Matrix forward_logits(const Network& net, const Matrix& inputs) {
  const Matrix x = propagate(net, inputs);
  if (!net.readout) throw std::invalid_argument("train: network needs a readout layer");
  Matrix logits(x.rows(), net.readout->weight.rows());
  logits.noalias() = x * net.readout->weight.transpose();
  logits.rowwise() += net.readout->bias.transpose();
  return logits;
}

// Evaluates in chunks so large datasets never materialize a full trace.
void loss_and_accuracy(const Network& net, const Dataset& data, double& loss, double& acc) {
  constexpr Eigen::Index kChunk = 2000;
  double loss_sum = 0.0;
  double correct = 0.0;
  for (Eigen::Index start = 0; start < data.size(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, data.size() - start);
    const Matrix logits = forward_logits(net, data.inputs.middleRows(start, n));
    const std::vector<int> y(data.labels.begin() + start, data.labels.begin() + start + n);
    loss_sum += softmax_cross_entropy(logits, y).loss * static_cast<double>(n);
    correct += accuracy(logits, y) * static_cast<double>(n);
  }
  const double total = static_cast<double>(std::max<Eigen::Index>(1, data.size()));
  loss = loss_sum / total;
  acc = correct / total;
}

}  // namespace

TrainRecord evaluate(const Network& net, int epoch, const Dataset& train_set, const Dataset& test_set,
                     const Dataset& probe) {
  if (!probe.labeled()) throw std::invalid_argument("train: the probe must be labeled");
  TrainRecord r;
  r.epoch = epoch;
  loss_and_accuracy(net, train_set, r.train_loss, r.train_accuracy);
  double test_loss = 0.0;
  loss_and_accuracy(net, test_set, test_loss, r.test_accuracy);

  const ForwardTrace trace = forward(net, probe.inputs);
  try {
    r.vni = vni_empirical(trace.post.back()).value;
  } catch (const NumericalError&) {
    r.vni = std::numeric_limits<double>::quiet_NaN();
  }
  r.per_layer_gain = per_layer_gain(net, probe.inputs);
  const LossResult loss = softmax_cross_entropy(*trace.logits, probe.labels);
  const Gradients g = backward(net, trace, loss.grad, true);
  r.input_grad_log_norm = std::log10(g.input.squaredNorm());
  for (const Layer& layer : net.layers)
    if (layer.reflectors) r.orthogonality_error = std::max(r.orthogonality_error, orthogonality_error(layer.weight));
  return r;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& test_set, const Dataset& probe) {
  NetworkSpec spec = config.network;
  spec.input_dim = static_cast<int>(train_set.input_dim());
  spec.num_classes = train_set.num_classes;
  Rng rng(config.seed);
  Rng init_rng = rng.fork(0);
  return train(config, initialize_network(spec, config.init, init_rng), train_set, test_set, probe);
}

TrainResult train(const TrainConfig& config, Network net, const Dataset& train_set, const Dataset& test_set,
                  const Dataset& probe) {
  config.optimizer.validate();
  config.success.validate();
  if (config.epochs < 0 || config.batch_size < 1 || config.repeats < 1)
    throw std::invalid_argument("train: epochs >= 0, batch_size >= 1 and repeats >= 1 required");
  if (!train_set.labeled() || !test_set.labeled()) throw std::invalid_argument("train: datasets must be labeled");
  net.validate();
  if (net.spec.input_dim != train_set.input_dim() || net.spec.num_classes != train_set.num_classes)
    throw DimensionError("train: network does not match the dataset");

  TrainResult result;
  if (config.epochs == 0) {
    result.network = std::move(net);
    return result;
  }
  Rng shuffle_rng = Rng(config.seed).fork(1);
  OptimizerState opt(config.optimizer);
  result.records.push_back(evaluate(net, 0, train_set, test_set, probe));

  const std::size_t n = static_cast<std::size_t>(train_set.size());
  std::vector<Eigen::Index> order(n * static_cast<std::size_t>(config.repeats));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i % n);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Matrix xb = train_set.inputs(idx, Eigen::all);
      std::vector<int> yb(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) yb[k] = train_set.labels[static_cast<std::size_t>(idx[k])];

      const ForwardTrace trace = forward(net, xb);
      const LossResult loss = softmax_cross_entropy(*trace.logits, yb);
      if (!std::isfinite(loss.loss)) {
        result.diverged = true;
        break;
      }
      step(opt, backward(net, trace, loss.grad, false), net);
    }
    if (!result.diverged && !(net.readout->weight.allFinite() && net.layers.back().weight.allFinite()))
      result.diverged = true;
    if (result.diverged) {
      result.failure_reason = "diverged";
      result.success = false;
      break;
    }

    TrainRecord record = evaluate(net, epoch, train_set, test_set, probe);
    if (!std::isfinite(record.train_loss)) {
      result.diverged = true;
      result.failure_reason = "diverged";
      result.success = false;
      result.records.push_back(std::move(record));
      break;
    }
    if (!result.success && config.success.met(record)) {
      result.success = true;
      result.success_epoch = epoch;
    }
    result.records.push_back(record);
    if (result.success && config.early_stop) {
      for (int rest = epoch + 1; rest <= config.epochs; ++rest) {
        record.epoch = rest;
        record.converged = true;
        result.records.push_back(record);
      }
      break;
    }
  }
  result.network = std::move(net);
  return result;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<EpochQuartiles> quartile_dynamics(const std::vector<std::vector<TrainRecord>>& runs) {
  if (runs.size() < 2) throw std::invalid_argument("quartile_dynamics: need at least 2 runs");
  const std::size_t epochs = runs.front().size();
  for (const auto& run : runs) {
    if (run.size() != epochs) throw std::invalid_argument("quartile_dynamics: runs have different epoch counts");
    for (std::size_t e = 0; e < epochs; ++e)
      if (run[e].epoch != runs.front()[e].epoch) throw std::invalid_argument("quartile_dynamics: misaligned epochs");
  }
  std::vector<EpochQuartiles> out;
  out.reserve(epochs);
  std::vector<double> v(runs.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t r = 0; r < runs.size(); ++r) v[r] = runs[r][e].vni;
    out.push_back({runs.front()[e].epoch, quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)});
  }
  return out;
}

}  // namespace vnl
