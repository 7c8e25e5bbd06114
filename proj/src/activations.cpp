#include "vnl/activations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vnl {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double std_normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// Composite Simpson rule for E_{z~N(0,1)}[f(z)] on [-10, 10]; the neglected
// tails carry < 2e-23 mass, and every integrand here is bounded by 1.
template <typename F>
double gaussian_expectation(F&& f) {
  constexpr int kIntervals = 1000;
  constexpr double kLo = -10.0;
  constexpr double kHi = 10.0;
  constexpr double step = (kHi - kLo) / kIntervals;
  double sum = f(kLo) * std_normal_pdf(kLo) + f(kHi) * std_normal_pdf(kHi);
  for (int i = 1; i < kIntervals; ++i) {
    const double z = kLo + i * step;
    sum += (i % 2 == 1 ? 4.0 : 2.0) * f(z) * std_normal_pdf(z);
  }
  return sum * step / 3.0;
}

}  // namespace

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::Linear:
      return "linear";
    case Activation::ReLU:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::HardTanh:
      return "hardtanh";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "hardtanh") return Activation::HardTanh;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

double activate(Activation kind, double h) {
  switch (kind) {
    case Activation::Linear:
      return h;
    case Activation::ReLU:
      return h > 0.0 ? h : 0.0;
    case Activation::Tanh:
      return std::tanh(h);
    case Activation::HardTanh:
      return std::clamp(h, -1.0, 1.0);
  }
  return h;
}

double activate_derivative(Activation kind, double h) {
  switch (kind) {
    case Activation::Linear:
      return 1.0;
    case Activation::ReLU:
      return h > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(h);
      return 1.0 - t * t;
    }
    case Activation::HardTanh:
      return std::abs(h) < 1.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

double expected_square_activation(Activation kind, double q) {
  if (q < 0.0) throw std::invalid_argument("expected_square_activation: negative variance");
  if (q == 0.0) return 0.0;
  switch (kind) {
    case Activation::Linear:
      return q;
    case Activation::ReLU:
      return 0.5 * q;
    case Activation::HardTanh: {
      // q E[z^2; |z| < a] + P(|z| >= a), a = 1/sqrt(q)
      const double a = 1.0 / std::sqrt(q);
      const double inside = std::erf(a / std::numbers::sqrt2);
      return q * (inside - 2.0 * a * std_normal_pdf(a)) + (1.0 - inside);
    }
    case Activation::Tanh: {
      const double s = std::sqrt(q);
      return gaussian_expectation([s](double z) {
        const double t = std::tanh(s * z);
        return t * t;
      });
    }
  }
  return q;
}

double expected_derivative_power(Activation kind, double q, int k) {
  if (q < 0.0) throw std::invalid_argument("expected_derivative_power: negative variance");
  switch (kind) {
    case Activation::Linear:
      return 1.0;
    case Activation::ReLU:
      return 0.5;
    case Activation::HardTanh:
      if (q == 0.0) return 1.0;
      return std::erf(1.0 / std::sqrt(2.0 * q));
    case Activation::Tanh: {
      if (q == 0.0) return 1.0;
      const double s = std::sqrt(q);
      return gaussian_expectation([s, k](double z) {
        const double t = std::tanh(s * z);
        return std::pow(1.0 - t * t, 2 * k);
      });
    }
  }
  return 1.0;
}

double variance_fixed_point(Activation kind, double sigma_w_sq, double sigma_b_sq, double sigma_x_sq) {
  if (!(sigma_w_sq > 0.0)) throw std::invalid_argument("variance_fixed_point: sigma_w_sq must be > 0");
  if (sigma_b_sq < 0.0 || sigma_x_sq < 0.0)
    throw std::invalid_argument("variance_fixed_point: variances must be >= 0");
  constexpr int kMaxIterations = 10'000;
  constexpr double kTolerance = 1e-9;
  constexpr double kDivergence = 1e12;
  double q = sigma_x_sq;
  for (int it = 0; it < kMaxIterations; ++it) {
    const double next = sigma_w_sq * expected_square_activation(kind, q) + sigma_b_sq;
    if (!std::isfinite(next) || next > kDivergence)
      throw NumericalError("variance_fixed_point: forward variance explodes (q > 1e12)");
    const bool done = std::abs(next - q) < kTolerance;
    q = next;
    if (done) break;
  }
  return q;
}

ActivationMoments moments(Activation kind, double q_star, Rng& rng, std::int64_t mc_samples) {
  if (q_star < 0.0) throw std::invalid_argument("moments: q_star must be >= 0");
  ActivationMoments m;
  m.q_star = q_star;
  switch (kind) {
    case Activation::Linear:
      m.mu1 = m.mu2 = 1.0;
      return m;
    case Activation::ReLU:
      m.mu1 = m.mu2 = 0.5;
      return m;
    case Activation::HardTanh:
      m.mu1 = m.mu2 = expected_derivative_power(kind, q_star, 1);
      return m;
    case Activation::Tanh:
      break;
  }
  if (mc_samples < 2) throw std::invalid_argument("moments: need at least 2 Monte Carlo samples");
  // Welford accumulation of d = phi'^2 and d^2.
  const double sd = std::sqrt(q_star);
  double mean1 = 0.0, m2_1 = 0.0, mean2 = 0.0, m2_2 = 0.0;
  for (std::int64_t i = 0; i < mc_samples; ++i) {
    const double d = activate_derivative(kind, sd * rng.normal());
    const double d1 = d * d;
    const double d2 = d1 * d1;
    const double n = static_cast<double>(i + 1);
    const double delta1 = d1 - mean1;
    mean1 += delta1 / n;
    m2_1 += delta1 * (d1 - mean1);
    const double delta2 = d2 - mean2;
    mean2 += delta2 / n;
    m2_2 += delta2 * (d2 - mean2);
  }
  const double n = static_cast<double>(mc_samples);
  m.mu1 = mean1;
  m.mu2 = mean2;
  m.method = MomentMethod::MonteCarlo;
  m.mc_samples = mc_samples;
  m.mu1_stderr = std::sqrt(m2_1 / (n - 1.0) / n);
  m.mu2_stderr = std::sqrt(m2_2 / (n - 1.0) / n);
  return m;
}

double norm_preserving_sigma_w_sq(Activation kind, double sigma_x_sq, double sigma_b_sq) {
  if (kind == Activation::Linear) return 1.0;
  if (kind == Activation::ReLU) return 2.0;
  // Bisection on s mu_1(q*(s)) - 1. Near s = 1 the map s -> 1/mu_1(q*(s))
  // has slope close to 1 for Tanh, so fixed-point iteration stalls.
  auto excess = [&](double s) {
    return s * expected_derivative_power(kind, variance_fixed_point(kind, s, sigma_b_sq, sigma_x_sq), 1) - 1.0;
  };
  double lo = 1.0, hi = 1.0 / expected_derivative_power(kind, sigma_x_sq, 1);
  if (excess(lo) >= 0.0) return lo;
  while (excess(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("norm_preserving_sigma_w_sq: no critical gain found");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace vnl
