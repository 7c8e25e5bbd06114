#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vnl/linalg.hpp"

using namespace vnl;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// det(A - x I) by Gaussian elimination with partial pivoting.
double char_poly(const Matrix& a, double x) {
  const int n = static_cast<int>(a.rows());
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m[i][j] = a(i, j) - (i == j ? x : 0.0);
  double det = 1.0;
  for (int c = 0; c < n; ++c) {
    int p = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(m[r][c]) > std::abs(m[p][c])) p = r;
    if (m[p][c] == 0.0) return 0.0;
    if (p != c) {
      std::swap(m[p], m[c]);
      det = -det;
    }
    det *= m[c][c];
    for (int r = c + 1; r < n; ++r) {
      const double f = m[r][c] / m[c][c];
      for (int k = c; k < n; ++k) m[r][k] -= f * m[c][k];
    }
  }
  return det;
}

// Roots of det(A - xI) inside the Gershgorin bound by scanning for sign
// changes and bisecting each bracket.
std::vector<double> char_poly_roots(const Matrix& a) {
  double bound = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) bound = std::max(bound, a.row(i).cwiseAbs().sum());
  bound += 1.0;
  std::vector<double> roots;
  const int steps = 200000;
  double x0 = -bound, f0 = char_poly(a, x0);
  for (int s = 1; s <= steps; ++s) {
    const double x1 = -bound + 2.0 * bound * s / steps;
    const double f1 = char_poly(a, x1);
    if ((f0 < 0) != (f1 < 0)) {
      double lo = x0, hi = x1, flo = f0;
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = char_poly(a, mid);
        if ((fm < 0) == (flo < 0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    x0 = x1;
    f0 = f1;
  }
  std::sort(roots.rbegin(), roots.rend());
  return roots;
}

Matrix random_symmetric(Eigen::Index n, Rng& rng) {
  const Matrix g = sample_gaussian<double>(n, n, 0.0, 1.0, rng);
  return (g + g.transpose()) / 2.0;
}

}  // namespace

TEST_SUITE("linalg") {
  TEST_CASE("matmul hand cases") {
    Rng rng(3);
    const Matrix a = sample_gaussian<double>(3, 3, 0.0, 1.0, rng);
    CHECK(matmul(Matrix::Identity(3, 3), a) == a);

    Matrix x(2, 2), y(2, 1);
    x << 1, 2, 3, 4;
    y << 0, 1;
    const Matrix z = matmul(x, y);
    CHECK(z(0, 0) == 2.0);
    CHECK(z(1, 0) == 4.0);
  }

  TEST_CASE("matmul matches naive triple loop") {
    Rng rng(11);
    const Matrix a = sample_gaussian<double>(5, 7, 0.0, 1.0, rng);
    const Matrix b = sample_gaussian<double>(7, 3, 0.0, 1.0, rng);
    CHECK((matmul(a, b) - naive_matmul(a, b)).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("matmul rejects mismatched shapes") {
    CHECK_THROWS_AS(matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)), DimensionError);
  }

  TEST_CASE("matmul is associative") {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
      const Matrix a = sample_gaussian<double>(6, 4, 0.0, 1.0, rng);
      const Matrix b = sample_gaussian<double>(4, 5, 0.0, 1.0, rng);
      const Matrix c = sample_gaussian<double>(5, 3, 0.0, 1.0, rng);
      const Matrix l = matmul(matmul(a, b), c);
      const Matrix r = matmul(a, matmul(b, c));
      CHECK((l - r).norm() <= 1e-9 * l.norm());
    }
  }

  TEST_CASE("sym_eigenvalues trivial spectra") {
    const Vector ones = sym_eigenvalues(Matrix(Matrix::Identity(4, 4)));
    CHECK(ones.size() == 4);
    CHECK((ones.array() - 1.0).abs().maxCoeff() < 1e-14);

    Matrix d = Matrix::Zero(3, 3);
    d.diagonal() << 3, 1, 2;
    const Vector v = sym_eigenvalues(d);
    CHECK(v(0) == doctest::Approx(3.0));
    CHECK(v(1) == doctest::Approx(2.0));
    CHECK(v(2) == doctest::Approx(1.0));
  }

  TEST_CASE("sym_eigenvalues match characteristic polynomial roots") {
    Rng rng(42);
    for (int t = 0; t < 5; ++t) {
      const Matrix a = random_symmetric(4, rng);
      const Vector ev = sym_eigenvalues(a);
      const auto roots = char_poly_roots(a);
      REQUIRE(roots.size() == 4);
      for (int k = 0; k < 4; ++k) CHECK(std::abs(ev(k) - roots[static_cast<std::size_t>(k)]) < 1e-8);
    }
  }

  TEST_CASE("sym_eigen reconstructs the matrix") {
    Rng rng(8);
    const Matrix a = random_symmetric(12, rng);
    const auto e = sym_eigen(a);
    const Matrix rec = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    CHECK((rec - a).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index k = 1; k < e.values.size(); ++k) CHECK(e.values(k - 1) >= e.values(k));
  }

  TEST_CASE("sym_eigenvalues trace identities") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
      const Matrix a = random_symmetric(20, rng);
      const Vector ev = sym_eigenvalues(a);
      const double tr = a.trace();
      const double tr2 = (a * a).trace();
      CHECK(std::abs(ev.sum() - tr) <= 1e-9 * std::max(1.0, std::abs(tr)));
      CHECK(std::abs(ev.squaredNorm() - tr2) <= 1e-9 * tr2);
    }
  }

  TEST_CASE("sym_eigenvalues rejects bad input") {
    CHECK_THROWS_AS(sym_eigenvalues(Matrix(Matrix::Zero(2, 3))), DimensionError);
    Matrix asym = Matrix::Identity(2, 2);
    asym(0, 1) = 1.0;
    CHECK_THROWS_AS(sym_eigenvalues(asym), std::invalid_argument);
  }

  TEST_CASE("qr_orthogonal") {
    Rng rng(1);
    const Matrix q1 = qr_orthogonal<double>(1, rng);
    CHECK(std::abs(std::abs(q1(0, 0)) - 1.0) < 1e-15);
    for (Eigen::Index n : {2, 5, 17, 64}) {
      const Matrix q = qr_orthogonal<double>(n, rng);
      CHECK(orthogonality_error(q) < 1e-10);
    }
    const Matrix q = qr_orthogonal<double>(64, rng);
    const Vector sv_sq = sym_eigenvalues(Matrix(q.transpose() * q));
    CHECK((sv_sq.array().sqrt() - 1.0).abs().maxCoeff() < 1e-8);
  }

  TEST_CASE("gaussian sampler statistics") {
    Rng rng(2024);
    const Matrix z = sample_gaussian<double>(3, 4, 1.5, 0.0, rng);
    CHECK((z.array() == 1.5).all());

    const Matrix g = sample_gaussian<double>(1000, 1000, 0.0, 1.0, rng);
    const double mean = g.mean();
    const double var = (g.array() - mean).square().sum() / static_cast<double>(g.size() - 1);
    CHECK(var >= 0.99);
    CHECK(var <= 1.01);
    CHECK(std::abs(mean) < 0.005);

    CHECK_THROWS(sample_gaussian<double>(2, 2, 0.0, -1.0, rng));
  }

  TEST_CASE("uniform sampler statistics") {
    Rng rng(77);
    const double w = 0.7;
    const Matrix u = sample_uniform<double>(1000, 1000, w, rng);
    const double mean = u.mean();
    const double var = (u.array() - mean).square().sum() / static_cast<double>(u.size() - 1);
    CHECK(std::abs(var / (w * w / 3.0) - 1.0) < 0.01);
    CHECK(u.cwiseAbs().maxCoeff() <= w);
  }

  TEST_CASE("rng reproducibility") {
    Rng a(123), b(123), c(124);
    const Matrix x = sample_gaussian<double>(10, 10, 0.0, 1.0, a);
    const Matrix y = sample_gaussian<double>(10, 10, 0.0, 1.0, b);
    const Matrix z = sample_gaussian<double>(10, 10, 0.0, 1.0, c);
    CHECK(x == y);
    CHECK(x != z);
    CHECK(Rng(5).fork(3).next_u64() == Rng(5).fork(3).next_u64());
    CHECK(Rng(5).fork(3).next_u64() != Rng(5).fork(4).next_u64());
  }

  TEST_CASE("sample covariance matches a two-pass oracle") {
    Rng rng(6);
    const Matrix x = sample_gaussian<double>(50, 4, 0.3, 2.0, rng);
    const Matrix c = sample_covariance(x);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double mi = 0, mj = 0;
        for (int r = 0; r < 50; ++r) {
          mi += x(r, i);
          mj += x(r, j);
        }
        mi /= 50;
        mj /= 50;
        double s = 0;
        for (int r = 0; r < 50; ++r) s += (x(r, i) - mi) * (x(r, j) - mj);
        CHECK(std::abs(c(i, j) - s / 49) < 1e-12);
      }
  }
}
