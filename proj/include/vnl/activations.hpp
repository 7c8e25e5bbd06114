#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "vnl/linalg.hpp"

namespace vnl {

enum class Activation { Linear, ReLU, Tanh, HardTanh };

std::string to_string(Activation kind);
Activation parse_activation(std::string_view name);

/// Elementwise phi(h).
template <typename Derived>
typename Derived::PlainObject activate(Activation kind, const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case Activation::Linear:
      return h;
    case Activation::ReLU:
      return h.cwiseMax(Scalar(0));
    case Activation::Tanh:
      return h.array().tanh().matrix();
    case Activation::HardTanh:
      return h.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  }
  return h;
}

/// Elementwise phi'(h). Kinks (0 for ReLU, +-1 for HardTanh) take the value 0.
template <typename Derived>
typename Derived::PlainObject activate_derivative(Activation kind, const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case Activation::Linear:
      return Derived::PlainObject::Ones(h.rows(), h.cols());
    case Activation::ReLU:
      return (h.array() > Scalar(0)).template cast<Scalar>().matrix();
    case Activation::Tanh:
      return (Scalar(1) - h.array().tanh().square()).matrix();
    case Activation::HardTanh:
      return (h.array().abs() < Scalar(1)).template cast<Scalar>().matrix();
  }
  return h;
}

double activate(Activation kind, double h);
double activate_derivative(Activation kind, double h);

enum class MomentMethod { ClosedForm, MonteCarlo, Quadrature };

/// mu_k = E[phi'(h)^(2k)], h ~ N(0, q_star), for k = 1, 2.
struct ActivationMoments {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double q_star = 0.0;
  MomentMethod method = MomentMethod::ClosedForm;
  std::int64_t mc_samples = 0;
  double mu1_stderr = 0.0;
  double mu2_stderr = 0.0;
};

inline constexpr std::int64_t kDefaultMonteCarloSamples = 1'000'000;

/// E_{z~N(0,1)}[phi(sqrt(q) z)^2]; closed form where one exists, Simpson
/// quadrature otherwise.
double expected_square_activation(Activation kind, double q);

/// E_{h~N(0,q)}[phi'(h)^(2k)] by closed form or quadrature (deterministic, no sampling).
double expected_derivative_power(Activation kind, double q, int k);

/// Terminal value of q <- sigma_w_sq * E[phi(sqrt(q) z)^2] + sigma_b_sq from q = sigma_x_sq.
/// Throws NumericalError when q exceeds 1e12.
double variance_fixed_point(Activation kind, double sigma_w_sq, double sigma_b_sq, double sigma_x_sq);

/// mu_1, mu_2 at pre-activation variance q_star. Tanh is estimated by Monte Carlo.
ActivationMoments moments(Activation kind, double q_star, Rng& rng,
                          std::int64_t mc_samples = kDefaultMonteCarloSamples);

/// sigma_w^2 satisfying sigma_w^2 * mu_1(q*(sigma_w^2)) = 1, where q* is the
/// forward-variance fixed point started at sigma_x_sq.
double norm_preserving_sigma_w_sq(Activation kind, double sigma_x_sq, double sigma_b_sq = 0.0);

}  // namespace vnl
