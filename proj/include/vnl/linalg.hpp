#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "vnl/errors.hpp"
#include "vnl/rng.hpp"

namespace vnl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Checked matrix product. Eigen is built without OpenMP here, so the
/// summation order for given shapes is fixed and results are reproducible.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                         const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.rows(), a.cols()) + " times " +
                         shape_string(b.rows(), b.cols()));
  }
  MatrixX<typename DerivedA::Scalar> out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, typename Derived::Scalar tol) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = j + 1; i < a.rows(); ++i)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

template <typename Scalar>
struct SymmetricEigen {
  VectorX<Scalar> values;   // descending
  MatrixX<Scalar> vectors;  // column k pairs with values(k); empty if not requested
};

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
/// Ties keep the solver's relative order (stable sort).
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> sym_eigen(const Eigen::MatrixBase<Derived>& a,
                                                   bool with_vectors = true) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols())
    throw DimensionError("sym_eigen: non-square " + shape_string(a.rows(), a.cols()));
  const Scalar scale = std::max<Scalar>(Scalar(1), a.cwiseAbs().maxCoeff());
  if (!is_symmetric(a, Scalar(1e-10) * scale))
    throw std::invalid_argument("sym_eigen: matrix is not symmetric within 1e-10");

  MatrixX<Scalar> sym = (a + a.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(
      sym, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eigen: solver did not converge");

  const Eigen::Index n = a.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  // Solver output is ascending; walk it backwards so equal values keep a stable order.
  std::reverse(order.begin(), order.end());
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return solver.eigenvalues()(i) > solver.eigenvalues()(j);
  });

  SymmetricEigen<Scalar> out;
  out.values.resize(n);
  if (with_vectors) out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = solver.eigenvalues()(order[static_cast<std::size_t>(k)]);
    if (with_vectors) out.vectors.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> sym_eigenvalues(const Eigen::MatrixBase<Derived>& a) {
  return sym_eigen(a, false).values;
}

/// i.i.d. Gaussian entries, filled column-major from consecutive Box-Muller pairs.
template <typename Scalar = double>
MatrixX<Scalar> sample_gaussian(Eigen::Index rows, Eigen::Index cols, Scalar mean, Scalar variance,
                                Rng& rng) {
  if (variance < 0) throw std::invalid_argument("sample_gaussian: negative variance");
  MatrixX<Scalar> out(rows, cols);
  const Scalar sd = std::sqrt(variance);
  Scalar* data = out.data();
  const Eigen::Index n = out.size();
  for (Eigen::Index i = 0; i < n; i += 2) {
    double z0, z1;
    rng.normal_pair(z0, z1);
    data[i] = mean + sd * static_cast<Scalar>(z0);
    if (i + 1 < n) data[i + 1] = mean + sd * static_cast<Scalar>(z1);
  }
  return out;
}

/// i.i.d. entries uniform on [-half_width, half_width].
template <typename Scalar = double>
MatrixX<Scalar> sample_uniform(Eigen::Index rows, Eigen::Index cols, Scalar half_width, Rng& rng) {
  if (half_width < 0) throw std::invalid_argument("sample_uniform: negative half width");
  MatrixX<Scalar> out(rows, cols);
  Scalar* data = out.data();
  for (Eigen::Index i = 0; i < out.size(); ++i)
    data[i] = half_width * static_cast<Scalar>(2.0 * rng.uniform() - 1.0);
  return out;
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of diag(R) folded into Q.
template <typename Scalar = double>
MatrixX<Scalar> qr_orthogonal(Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("qr_orthogonal: n must be >= 1");
  const MatrixX<Scalar> g = sample_gaussian<Scalar>(n, n, Scalar(0), Scalar(1), rng);
  Eigen::HouseholderQR<MatrixX<Scalar>> qr(g);
  MatrixX<Scalar> q = qr.householderQ() * MatrixX<Scalar>::Identity(n, n);
  const MatrixX<Scalar>& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

/// Max-abs deviation of QᵀQ from the identity.
template <typename Derived>
typename Derived::Scalar orthogonality_error(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> g = q.transpose() * q;
  g.diagonal().array() -= Scalar(1);
  return g.cwiseAbs().maxCoeff();
}

/// Sample covariance (1/(n-1)) of the columns of a batch-major matrix.
template <typename Derived>
MatrixX<typename Derived::Scalar> sample_covariance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() < 2) throw std::invalid_argument("sample_covariance: need at least 2 rows");
  const VectorX<Scalar> mean = x.colwise().mean().transpose();
  const MatrixX<Scalar> centered = x.rowwise() - mean.transpose();
  MatrixX<Scalar> c(x.cols(), x.cols());
  c.noalias() = centered.transpose() * centered;
  c /= static_cast<Scalar>(x.rows() - 1);
  return c;
}

}  // namespace vnl
