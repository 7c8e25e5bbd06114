#pragma once

#include <map>
#include <optional>
#include <vector>

#include "vnl/activations.hpp"
#include "vnl/initializers.hpp"
#include "vnl/linalg.hpp"
#include "vnl/network.hpp"

namespace vnl {

// ---------------------------------------------------------------------------
// Vanishing node indicator (VNI, R_sq)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct EmpiricalVni {
  Scalar value{};
  MatrixX<Scalar> corr_sq;        // rho_ij^2; rows/cols of constant nodes are 0
  VectorX<Scalar> node_variances;  // sigma_i^2
};

/// Weighted average of squared node correlations,
///   R_sq = sum_ij rho_ij^2 s_i s_j / sum_ij s_i s_j,  s_i = sigma_i^2,
/// over the sample (co)variances of `activations` (batch x N). Constant
/// nodes carry zero weight.
template <typename Derived>
EmpiricalVni<typename Derived::Scalar> vni_empirical(const Eigen::MatrixBase<Derived>& activations) {
  using Scalar = typename Derived::Scalar;
  if (activations.rows() < 2) throw std::invalid_argument("vni_empirical: batch must have at least 2 samples");
  const MatrixX<Scalar> cov = sample_covariance(activations);
  const Eigen::Index n = cov.rows();

  EmpiricalVni<Scalar> out;
  out.node_variances = cov.diagonal();
  out.corr_sq = MatrixX<Scalar>::Zero(n, n);
  Scalar numerator = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar sj = out.node_variances(j);
    if (!(sj > 0)) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar si = out.node_variances(i);
      if (!(si > 0)) continue;
      const Scalar weight = si * sj;
      const Scalar rho_sq = std::min<Scalar>(Scalar(1), cov(i, j) * cov(i, j) / weight);
      out.corr_sq(i, j) = i == j ? Scalar(1) : rho_sq;
      numerator += (i == j ? Scalar(1) : cov(i, j) * cov(i, j) / weight) * weight;
    }
  }
  const Scalar total = out.node_variances.sum();
  if (!(total > 0)) throw NumericalError("vni_empirical: every node is constant over the batch");
  out.value = numerator / (total * total);
  return out;
}

/// R_sq = tr(C C^T) / tr(C)^2.
template <typename Derived>
typename Derived::Scalar vni_from_covariance(const Eigen::MatrixBase<Derived>& c) {
  using Scalar = typename Derived::Scalar;
  if (c.rows() != c.cols()) throw DimensionError("vni_from_covariance: covariance must be square");
  const Scalar scale = std::max<Scalar>(Scalar(1e-300), c.cwiseAbs().maxCoeff());
  if (!is_symmetric(c, Scalar(1e-10) * scale)) throw std::invalid_argument("vni_from_covariance: C is not symmetric");
  if ((c.diagonal().array() < -Scalar(1e-12) * scale).any())
    throw std::invalid_argument("vni_from_covariance: C has negative variances");
  const Scalar trace = c.trace();
  if (!(trace > 0)) throw NumericalError("vni_from_covariance: tr(C) = 0");
  return c.squaredNorm() / (trace * trace);
}

struct SpectralMoments {
  double m1 = 0.0;
  double m2 = 0.0;
  Vector lambda;             // eigenvalues of J J^T, descending
  std::optional<double> s1;  // weight-ensemble S-transform moment, when known
};

struct JacobianVni {
  double value = 0.0;
  SpectralMoments moments;
};

/// R_sq ~= m2 / (N m1^2) from the eigenvalues of J J^T. sigma_x_sq cancels;
/// it is accepted so callers can pass the covariance scale they used.
JacobianVni vni_from_jacobian(const Eigen::Ref<const Matrix>& jac, double sigma_x_sq);

struct TheoreticalVni {
  double raw = 0.0;
  double clamped = 0.0;  // raw limited to [1/N, 1]
};

/// R_sq ~= 1/N + (L/N)(mu2/mu1^2 - 1 - s1). Accurate only for N >> L.
TheoreticalVni vni_theoretical(int depth, int width, const ActivationMoments& moments, double s1);

/// First S-transform moment of the weight ensemble: -1 for i.i.d. entries,
/// 0 for orthogonal. Other initializers have no closed form.
double s1_for_ensemble(InitKind kind);

// ---------------------------------------------------------------------------
// Effective number of nodes
// ---------------------------------------------------------------------------

/// max{t : lambda_t >= epsilon * lambda_1} over the descending spectrum of C.
int epsilon_enn(const Eigen::Ref<const Matrix>& c, double epsilon);

/// N_e solving [1 + (N_e-1) eps]^2 = (1 + (N_e-1) eps^2) / R_sq with
/// N_e - 1 in [0, N-1]; the larger admissible root is returned.
double enn_from_rsq(int n, double r_sq, double epsilon);

inline const std::vector<double>& default_enn_epsilons() {
  static const std::vector<double> eps{0.01, 0.1, 0.5, 0.9};
  return eps;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct VniReport {
  double vni_empirical = 0.0;
  double vni_covariance = 0.0;
  double vni_jacobian = 0.0;
  TheoreticalVni vni_theoretical;
  std::optional<SpectralMoments> spectrum;
  Matrix corr_sq;
  Vector node_variances;
  std::map<double, int> enn;  // epsilon -> epsilon-ENN of the sample covariance
};

struct VniReportOptions {
  bool with_jacobian = true;
  std::optional<double> s1;                     // theoretical route skipped when unset
  std::optional<ActivationMoments> moments;     // "
  double sigma_x_sq = 0.1;
  std::vector<double> epsilons = default_enn_epsilons();
};

/// All VNI routes for `net` on `probe` (batch x input_dim). The Jacobian is
/// taken at the first probe row.
VniReport vni_report(const Network& net, const Eigen::Ref<const Matrix>& probe, const VniReportOptions& options);

// ---------------------------------------------------------------------------
// Gradient-scale diagnostics
// ---------------------------------------------------------------------------

struct GradientDiagnostics {
  Vector per_layer_gain;  // fan_in * Var[W_l] * mu_1,l
  double sigma_x_sq = 0.0;
  double sigma_y_sq = 0.0;
  double var_x_L = 0.0;
  double var_input_grad = 0.0;
  Vector var_weight_grad;
  // predictions from the per-layer gains
  double predicted_var_x_L = 0.0;
  double predicted_var_input_grad = 0.0;
  Vector predicted_var_weight_grad;
};

/// Shared scalar variance: mean over columns of the per-column sample variance.
double shared_variance(const Eigen::Ref<const Matrix>& x);

/// fan_in * Var[W_l entries] * mean(phi'(h_l)^2) per backbone layer, with h_l
/// taken from the forward pass of `probe`.
Vector per_layer_gain(const Network& net, const Eigen::Ref<const Matrix>& probe);

/// Measures forward/backward variances on `probe` with `loss_grads` =
/// dLoss/d(output) per sample, and the predictions
///   Var[x_L] = s_x prod g,  Var[dC/dx_0] = s_y prod g,  Var[dC/dW_l] = s_x s_y prod_{k!=l} g_k.
GradientDiagnostics gradient_diagnostics(const Network& net, const Eigen::Ref<const Matrix>& probe,
                                         const Eigen::Ref<const Matrix>& loss_grads);

/// log10(|a|^2 / |b|^2). Throws when either gradient has vanished entirely.
double walking_dead_ratio(const Eigen::Ref<const Vector>& grads_a, const Eigen::Ref<const Vector>& grads_b);

/// Same ratio from precomputed log10 squared norms.
double walking_dead_ratio_from_log_norms(double log10_norm_sq_a, double log10_norm_sq_b);

struct HeatmapOrder {
  Matrix ordered;
  std::vector<int> permutation;  // ordered(i, j) = corr_sq(perm[i], perm[j])
};

/// Orders nodes by their component in the leading eigenvector of corr_sq,
/// then by correlated cluster (lowest index with rho^2 >= 0.5), then by index.
HeatmapOrder correlation_heatmap(const Eigen::Ref<const Matrix>& corr_sq);

}  // namespace vnl
