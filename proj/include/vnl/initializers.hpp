#pragma once

#include <string>
#include <string_view>

#include "vnl/householder.hpp"
#include "vnl/linalg.hpp"
#include "vnl/network.hpp"

namespace vnl {

enum class InitKind { ScaledGaussian, ScaledUniform, Orthogonal, Bottleneck, Householder };

std::string to_string(InitKind kind);
InitKind parse_init_kind(std::string_view name);

struct InitializerSpec {
  InitKind kind = InitKind::ScaledGaussian;
  double sigma_w_sq = 1.0;   // entry variance is sigma_w_sq / fan_in
  int bottleneck_rank = 1;   // N_b, Bottleneck only
  bool bottleneck_uniform = false;  // U, V entries uniform instead of Gaussian

  void validate() const;
};

/// i.i.d. fan_out x fan_in weights with variance sigma_w_sq / fan_in.
/// The uniform variant uses half-width sqrt(3 sigma_w_sq / fan_in).
Matrix init_scaled(InitKind kind, Eigen::Index fan_in, Eigen::Index fan_out, double sigma_w_sq, Rng& rng);

/// sigma_w Q with Q Haar-orthogonal; square only.
Matrix init_orthogonal(Eigen::Index n, double sigma_w, Rng& rng);

/// Rectangular counterpart of init_orthogonal: orthonormal rows (or columns)
/// rescaled so entries have variance sigma_w^2 / fan_in.
Matrix init_semi_orthogonal(Eigen::Index fan_in, Eigen::Index fan_out, double sigma_w, Rng& rng);

/// W = V U / sqrt(N_b N_mean), U: N_b x N_i, V: N_o x N_b, unit-variance
/// entries, N_mean = (N_i + N_o) / 2. rank(W) <= N_b.
Matrix init_bottleneck(Eigen::Index fan_in, Eigen::Index fan_out, Eigen::Index rank, Rng& rng,
                       bool uniform_entries = false);

/// Builds every layer of `spec`. Backbone layers follow `init`; the readout
/// is always scaled Gaussian with unit gain. With InitKind::Householder the
/// square backbone layers carry reflector stacks and the first layer falls
/// back to a semi-orthogonal dense matrix when input_dim != width.
Network initialize_network(const NetworkSpec& spec, const InitializerSpec& init, Rng& rng);

}  // namespace vnl
