#include "vnl/initializers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vnl {

std::string to_string(InitKind kind) {
  switch (kind) {
    case InitKind::ScaledGaussian:
      return "gaussian";
    case InitKind::ScaledUniform:
      return "uniform";
    case InitKind::Orthogonal:
      return "orthogonal";
    case InitKind::Bottleneck:
      return "bottleneck";
    case InitKind::Householder:
      return "householder";
  }
  return "unknown";
}

InitKind parse_init_kind(std::string_view name) {
  if (name == "gaussian") return InitKind::ScaledGaussian;
  if (name == "uniform") return InitKind::ScaledUniform;
  if (name == "orthogonal") return InitKind::Orthogonal;
  if (name == "bottleneck") return InitKind::Bottleneck;
  if (name == "householder") return InitKind::Householder;
  throw std::invalid_argument("unknown init kind '" + std::string(name) + "'");
}

void InitializerSpec::validate() const {
  if (!(sigma_w_sq > 0.0)) throw std::invalid_argument("InitializerSpec: sigma_w_sq must be > 0");
  if (kind == InitKind::Bottleneck && bottleneck_rank < 1)
    throw std::invalid_argument("InitializerSpec: bottleneck_rank must be >= 1");
}

Matrix init_scaled(InitKind kind, Eigen::Index fan_in, Eigen::Index fan_out, double sigma_w_sq, Rng& rng) {
  if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("init_scaled: dimensions must be >= 1");
  const double variance = sigma_w_sq / static_cast<double>(fan_in);
  switch (kind) {
    case InitKind::ScaledGaussian:
      return sample_gaussian<double>(fan_out, fan_in, 0.0, variance, rng);
    case InitKind::ScaledUniform:
      return sample_uniform<double>(fan_out, fan_in, std::sqrt(3.0 * variance), rng);
    default:
      throw std::invalid_argument("init_scaled: kind must be gaussian or uniform");
  }
}

Matrix init_orthogonal(Eigen::Index n, double sigma_w, Rng& rng) { return sigma_w * qr_orthogonal<double>(n, rng); }

Matrix init_semi_orthogonal(Eigen::Index fan_in, Eigen::Index fan_out, double sigma_w, Rng& rng) {
  if (fan_in == fan_out) return init_orthogonal(fan_in, sigma_w, rng);
  const Eigen::Index big = std::max(fan_in, fan_out);
  const Eigen::Index small = std::min(fan_in, fan_out);
  const Matrix q = qr_orthogonal<double>(big, rng).leftCols(small);
  // Orthonormal columns have entry variance 1/big; rescale to sigma_w^2/fan_in.
  const double scale = sigma_w * std::sqrt(static_cast<double>(big) / static_cast<double>(fan_in));
  return fan_out > fan_in ? Matrix(scale * q) : Matrix(scale * q.transpose());
}

Matrix init_bottleneck(Eigen::Index fan_in, Eigen::Index fan_out, Eigen::Index rank, Rng& rng, bool uniform_entries) {
  if (rank < 1 || rank > std::min(fan_in, fan_out))
    throw std::invalid_argument("init_bottleneck: N_b must lie in [1, min(N_i, N_o)]");
  const double half_width = std::sqrt(3.0);
  const Matrix u = uniform_entries ? sample_uniform<double>(rank, fan_in, half_width, rng)
                                   : sample_gaussian<double>(rank, fan_in, 0.0, 1.0, rng);
  const Matrix v = uniform_entries ? sample_uniform<double>(fan_out, rank, half_width, rng)
                                   : sample_gaussian<double>(fan_out, rank, 0.0, 1.0, rng);
  const double n_mean = 0.5 * static_cast<double>(fan_in + fan_out);
  return matmul(v, u) / std::sqrt(static_cast<double>(rank) * n_mean);
}

Network initialize_network(const NetworkSpec& spec, const InitializerSpec& init, Rng& rng) {
  spec.validate();
  init.validate();
  Network net;
  net.spec = spec;
  net.parametrization = init.kind == InitKind::Householder ? Parametrization::Householder : Parametrization::Dense;
  net.layers.reserve(static_cast<std::size_t>(spec.depth));
  const double sigma_w = std::sqrt(init.sigma_w_sq);
  for (int l = 0; l < spec.depth; ++l) {
    const Eigen::Index fan_in = l == 0 ? spec.input_dim : spec.width;
    const Eigen::Index fan_out = spec.width;
    Layer layer;
    layer.bias = Vector::Zero(fan_out);
    switch (init.kind) {
      case InitKind::ScaledGaussian:
      case InitKind::ScaledUniform:
        layer.weight = init_scaled(init.kind, fan_in, fan_out, init.sigma_w_sq, rng);
        break;
      case InitKind::Orthogonal:
        layer.weight = init_semi_orthogonal(fan_in, fan_out, sigma_w, rng);
        break;
      case InitKind::Bottleneck:
        layer.weight = init_bottleneck(fan_in, fan_out, init.bottleneck_rank, rng, init.bottleneck_uniform);
        break;
      case InitKind::Householder:
        if (fan_in == fan_out) {
          layer.reflectors = householder_init(fan_in, rng);
          layer.rematerialize();
        } else {
          layer.weight = init_semi_orthogonal(fan_in, fan_out, sigma_w, rng);
        }
        break;
    }
    net.layers.push_back(std::move(layer));
  }
  if (spec.num_classes > 0) {
    Layer readout;
    readout.weight = init_scaled(InitKind::ScaledGaussian, spec.width, spec.num_classes, 1.0, rng);
    readout.bias = Vector::Zero(spec.num_classes);
    net.readout = std::move(readout);
  }
  return net;
}

}  // namespace vnl
