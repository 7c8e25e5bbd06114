#include "vnl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace vnl {

JacobianVni vni_from_jacobian(const Eigen::Ref<const Matrix>& jac, double sigma_x_sq) {
  if (!(sigma_x_sq > 0.0)) throw std::invalid_argument("vni_from_jacobian: sigma_x_sq must be > 0");
  if (jac.rows() < 1 || jac.cols() < 1) throw DimensionError("vni_from_jacobian: empty Jacobian");
  Matrix jjt(jac.rows(), jac.rows());
  jjt.noalias() = jac * jac.transpose();
  jjt = (0.5 * (jjt + jjt.transpose())).eval();

  JacobianVni out;
  out.moments.lambda = sym_eigenvalues(jjt);
  const double n = static_cast<double>(jac.rows());
  out.moments.m1 = out.moments.lambda.sum() / n;
  out.moments.m2 = out.moments.lambda.squaredNorm() / n;
  if (!(out.moments.m1 > 0.0)) throw NumericalError("vni_from_jacobian: m1 = 0 (degenerate Jacobian)");
  out.value = out.moments.m2 / (n * out.moments.m1 * out.moments.m1);
  return out;
}

TheoreticalVni vni_theoretical(int depth, int width, const ActivationMoments& moments, double s1) {
  if (depth < 1 || width < 1) throw std::invalid_argument("vni_theoretical: depth and width must be >= 1");
  if (!(moments.mu1 > 0.0)) throw std::invalid_argument("vni_theoretical: mu1 must be > 0");
  const double n = width;
  const double excess = moments.mu2 / (moments.mu1 * moments.mu1) - 1.0 - s1;
  TheoreticalVni out;
  out.raw = 1.0 / n + (depth / n) * excess;
  out.clamped = std::clamp(out.raw, 1.0 / n, 1.0);
  return out;
}

double s1_for_ensemble(InitKind kind) {
  switch (kind) {
    case InitKind::ScaledGaussian:
    case InitKind::ScaledUniform:
      return -1.0;
    case InitKind::Orthogonal:
      return 0.0;
    default:
      throw std::invalid_argument("s1_for_ensemble: no closed-form S-transform moment for " + to_string(kind));
  }
}

int epsilon_enn(const Eigen::Ref<const Matrix>& c, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon_enn: epsilon must lie in (0, 1]");
  const Vector lambda = sym_eigenvalues(c);
  const double top = lambda(0);
  if (!(top > 0.0)) throw NumericalError("epsilon_enn: largest eigenvalue is 0");
  int count = 0;
  while (count < lambda.size() && lambda(count) >= epsilon * top) ++count;
  return count;
}

double enn_from_rsq(int n, double r_sq, double epsilon) {
  if (n < 1) throw std::invalid_argument("enn_from_rsq: N must be >= 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("enn_from_rsq: epsilon must lie in (0, 1]");
  constexpr double kSlack = 1e-12;
  if (r_sq < 1.0 / n - kSlack || r_sq > 1.0 + kSlack)
    throw std::invalid_argument("enn_from_rsq: R_sq must lie in [1/N, 1]");

  // r e^2 t^2 + (2 r e - e^2) t + (r - 1) = 0 with t = N_e - 1.
  const double a = r_sq * epsilon * epsilon;
  const double b = 2.0 * r_sq * epsilon - epsilon * epsilon;
  const double c = r_sq - 1.0;
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) {
    if (disc < -1e-12 * (b * b + std::abs(4.0 * a * c))) throw NumericalError("enn_from_rsq: no real root");
    disc = 0.0;
  }
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  std::vector<double> roots;
  if (q != 0.0) {
    roots.push_back(q / a);
    roots.push_back(c / q);
  } else {
    roots.push_back(0.0);
  }

  const double hi = n - 1.0;
  const double tol = 1e-9 * std::max(1.0, hi);
  std::optional<double> best;
  for (double t : roots) {
    if (t < -tol || t > hi + tol) continue;
    t = std::clamp(t, 0.0, hi);
    if (!best || t > *best) best = t;
  }
  if (!best) throw NumericalError("enn_from_rsq: no root in [0, N-1]");
  return 1.0 + *best;
}

VniReport vni_report(const Network& net, const Eigen::Ref<const Matrix>& probe, const VniReportOptions& options) {
  const Matrix out = propagate(net, probe);
  auto empirical = vni_empirical(out);
  VniReport report;
  report.vni_empirical = empirical.value;
  report.corr_sq = std::move(empirical.corr_sq);
  report.node_variances = std::move(empirical.node_variances);

  const Matrix cov = sample_covariance(out);
  report.vni_covariance = vni_from_covariance(cov);
  for (double eps : options.epsilons) report.enn[eps] = epsilon_enn(cov, eps);

  if (options.with_jacobian) {
    auto jv = vni_from_jacobian(jacobian(net, probe.row(0).transpose()), options.sigma_x_sq);
    report.vni_jacobian = jv.value;
    jv.moments.s1 = options.s1;
    report.spectrum = std::move(jv.moments);
  }
  if (options.s1 && options.moments)
    report.vni_theoretical = vni_theoretical(net.spec.depth, net.spec.width, *options.moments, *options.s1);
  return report;
}

double shared_variance(const Eigen::Ref<const Matrix>& x) {
  if (x.rows() < 2) throw std::invalid_argument("shared_variance: need at least 2 rows");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double ss = (x.rowwise() - mean).squaredNorm();
  return ss / (static_cast<double>(x.rows() - 1) * static_cast<double>(x.cols()));
}

namespace {

double entry_variance(const Matrix& w) {
  const double mean = w.mean();
  return (w.array() - mean).square().sum() / static_cast<double>(w.size());
}

double mean_sq_derivative(Activation kind, const Matrix& h) {
  return activate_derivative(kind, h).squaredNorm() / static_cast<double>(h.size());
}

}  // namespace

Vector per_layer_gain(const Network& net, const Eigen::Ref<const Matrix>& probe) {
  Vector gains(net.spec.depth);
  Matrix x = probe;
  if (x.cols() != net.spec.input_dim) throw DimensionError("per_layer_gain: probe does not match input_dim");
  for (int l = 0; l < net.spec.depth; ++l) {
    const Layer& layer = net.layers[static_cast<std::size_t>(l)];
    Matrix h(x.rows(), layer.weight.rows());
    h.noalias() = x * layer.weight.transpose();
    h.rowwise() += layer.bias.transpose();
    gains(l) = static_cast<double>(layer.weight.cols()) * entry_variance(layer.weight) *
               mean_sq_derivative(net.spec.activation, h);
    x = activate(net.spec.activation, h);
  }
  return gains;
}

GradientDiagnostics gradient_diagnostics(const Network& net, const Eigen::Ref<const Matrix>& probe,
                                         const Eigen::Ref<const Matrix>& loss_grads) {
  if (probe.rows() < 2) throw std::invalid_argument("gradient_diagnostics: probe batch needs >= 2 samples");
  const ForwardTrace trace = forward(net, probe);
  if (loss_grads.rows() != probe.rows() || loss_grads.cols() != trace.output().cols())
    throw DimensionError("gradient_diagnostics: loss gradient shape does not match the network output");

  const std::size_t depth = net.layers.size();
  const Activation kind = net.spec.activation;
  GradientDiagnostics d;
  d.per_layer_gain.resize(static_cast<Eigen::Index>(depth));
  d.var_weight_grad.resize(static_cast<Eigen::Index>(depth));
  d.predicted_var_weight_grad.resize(static_cast<Eigen::Index>(depth));

  Matrix dx = net.readout ? Matrix(loss_grads * net.readout->weight) : Matrix(loss_grads);
  d.sigma_y_sq = shared_variance(dx);
  d.sigma_x_sq = shared_variance(trace.post.front());
  d.var_x_L = shared_variance(trace.post.back());

  const double batch = static_cast<double>(probe.rows());
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = net.layers[l];
    const Matrix deriv = activate_derivative(kind, trace.pre[l]);
    const Matrix delta = dx.cwiseProduct(deriv);
    const Matrix& x_prev = trace.post[l];
    // Per-sample gradient g_s = delta_s x_s^T; moments over samples and entries in O(batch * N).
    const double entries = batch * static_cast<double>(delta.cols() * x_prev.cols());
    const double second = (delta.rowwise().squaredNorm().array() * x_prev.rowwise().squaredNorm().array()).sum() / entries;
    const double first = (delta.rowwise().sum().array() * x_prev.rowwise().sum().array()).sum() / entries;
    const auto li = static_cast<Eigen::Index>(l);
    d.var_weight_grad(li) = std::max(0.0, second - first * first);
    d.per_layer_gain(li) = static_cast<double>(layer.weight.cols()) * entry_variance(layer.weight) *
                           deriv.squaredNorm() / static_cast<double>(deriv.size());
    dx = delta * layer.weight;
  }
  d.var_input_grad = shared_variance(dx);

  const double gain_product = d.per_layer_gain.prod();
  d.predicted_var_x_L = d.sigma_x_sq * gain_product;
  d.predicted_var_input_grad = d.sigma_y_sq * gain_product;
  for (Eigen::Index l = 0; l < d.per_layer_gain.size(); ++l) {
    double others = 1.0;
    for (Eigen::Index k = 0; k < d.per_layer_gain.size(); ++k)
      if (k != l) others *= d.per_layer_gain(k);
    d.predicted_var_weight_grad(l) = d.sigma_x_sq * d.sigma_y_sq * others;
  }
  return d;
}

double walking_dead_ratio_from_log_norms(double log10_norm_sq_a, double log10_norm_sq_b) {
  if (!std::isfinite(log10_norm_sq_a) || !std::isfinite(log10_norm_sq_b))
    throw NumericalError("walking_dead_ratio: gradient norm has vanished or overflowed");
  return log10_norm_sq_a - log10_norm_sq_b;
}

double walking_dead_ratio(const Eigen::Ref<const Vector>& grads_a, const Eigen::Ref<const Vector>& grads_b) {
  const double a = grads_a.squaredNorm();
  const double b = grads_b.squaredNorm();
  if (!(a > 0.0) || !(b > 0.0)) throw NumericalError("walking_dead_ratio: gradient has zero norm (vanished)");
  return walking_dead_ratio_from_log_norms(std::log10(a), std::log10(b));
}

HeatmapOrder correlation_heatmap(const Eigen::Ref<const Matrix>& corr_sq) {
  const Eigen::Index n = corr_sq.rows();
  if (corr_sq.cols() != n) throw DimensionError("correlation_heatmap: corr_sq must be square");
  HeatmapOrder out;
  out.permutation.resize(static_cast<std::size_t>(n));
  std::iota(out.permutation.begin(), out.permutation.end(), 0);
  if (n == 0) return out;

  // Leading eigenvector made basis-independent: project the all-ones vector
  // onto the (possibly degenerate) top eigenspace.
  const auto eig = sym_eigen(corr_sq);
  const double top = eig.values(0);
  Vector lead = Vector::Zero(n);
  const Vector ones = Vector::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (eig.values(k) < top - 1e-9 * std::max(1.0, std::abs(top))) break;
    lead += eig.vectors.col(k) * eig.vectors.col(k).dot(ones);
  }
  if (lead.norm() < 1e-12) lead = eig.vectors.col(0);
  if (lead.sum() < 0.0) lead = -lead;
  lead /= lead.norm();

  std::vector<std::tuple<long long, int, int>> keys;
  keys.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int anchor = static_cast<int>(i);
    for (Eigen::Index j = 0; j < i; ++j) {
      if (corr_sq(i, j) >= 0.5) {
        anchor = static_cast<int>(j);
        break;
      }
    }
    keys.emplace_back(-std::llround(lead(i) * 1e9), anchor, static_cast<int>(i));
  }
  std::sort(keys.begin(), keys.end());
  for (std::size_t i = 0; i < keys.size(); ++i) out.permutation[i] = std::get<2>(keys[i]);

  out.ordered.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out.ordered(i, j) = corr_sq(out.permutation[static_cast<std::size_t>(i)], out.permutation[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace vnl
