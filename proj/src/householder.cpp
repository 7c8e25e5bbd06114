#include "vnl/householder.hpp"

namespace vnl {

namespace {

double checked_norm_sq(const Eigen::Ref<const Vector>& v) {
  const double s = v.squaredNorm();
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericalError("householder: zero or non-finite reflection vector");
  return s;
}

}  // namespace

HouseholderStack householder_init(Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("householder_init: n must be >= 1");
  HouseholderStack stack{sample_gaussian<double>(n, n, 0.0, 1.0, rng)};
  for (Eigen::Index i = 0; i < n; ++i) checked_norm_sq(stack.vectors.col(i));
  return stack;
}

void apply_reflection(const Eigen::Ref<const Vector>& v, Eigen::Ref<Matrix> target) {
  const double s = checked_norm_sq(v);
  const Eigen::RowVectorXd w = v.transpose() * target;
  target.noalias() -= (2.0 / s) * v * w;
}

Matrix householder_materialize(const HouseholderStack& stack) {
  const Eigen::Index n = stack.size();
  if (n < 1) throw DimensionError("householder_materialize: empty stack");
  Matrix w = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < stack.count(); ++i) apply_reflection(stack.vectors.col(i), w);
  return w;
}

Matrix householder_backward(const HouseholderStack& stack, const Eigen::Ref<const Matrix>& upstream) {
  const Eigen::Index n = stack.size();
  if (upstream.rows() != n || upstream.cols() != n)
    throw DimensionError("householder_backward: upstream gradient must be " + shape_string(n, n));

  // W = A_i H_i B_i with A_i = H_n..H_{i+1}, B_i = H_{i-1}..H_1.
  // P_i = A_i^T G, so dL/dH_i = P_i B_i^T. Both factors are peeled one
  // reflection at a time (H_i is an involution), giving O(n^3) overall.
  const Eigen::Index k = stack.count();
  Matrix grad(n, k);
  if (k == 0) return grad;
  Matrix p = upstream;
  Matrix b = householder_materialize(stack);
  apply_reflection(stack.vectors.col(k - 1), b);

  for (Eigen::Index i = k - 1; i >= 0; --i) {
    const auto v = stack.vectors.col(i);
    const double s = checked_norm_sq(v);
    const Vector bt_v = b.transpose() * v;
    const Vector pt_v = p.transpose() * v;
    const Vector m_v = p * bt_v;
    const Vector mt_v = b * pt_v;
    const double vmv = pt_v.dot(bt_v);
    grad.col(i) = (-2.0 / s) * (m_v + mt_v) + (4.0 * vmv / (s * s)) * v;

    if (i > 0) {
      apply_reflection(v, p);
      apply_reflection(stack.vectors.col(i - 1), b);
    }
  }
  return grad;
}

}  // namespace vnl
