#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "vnl/analysis.hpp"
#include "vnl/householder.hpp"
#include "vnl/initializers.hpp"

using namespace vnl;

namespace {

double entry_variance(const Matrix& w) {
  const double mean = w.mean();
  return (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
}

int numerical_rank(const Matrix& w, double rel) {
  const Vector ev = sym_eigenvalues(Matrix(w.transpose() * w));
  int r = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > rel * ev(0)) ++r;
  return r;
}

}  // namespace

TEST_SUITE("initializers") {
  TEST_CASE("scaled gaussian variance") {
    Rng rng(1);
    const Matrix w = init_scaled(InitKind::ScaledGaussian, 500, 500, 1.3, rng);
    CHECK(std::abs(entry_variance(w) / (1.3 / 500) - 1.0) < 0.02);
  }

  TEST_CASE("scaled uniform support and variance") {
    Rng rng(2);
    const double sw = 0.8;
    const Matrix w = init_scaled(InitKind::ScaledUniform, 400, 300, sw, rng);
    CHECK(w.rows() == 300);
    CHECK(w.cols() == 400);
    CHECK(w.cwiseAbs().maxCoeff() <= std::sqrt(3 * sw / 400));
    CHECK(std::abs(entry_variance(w) / (sw / 400) - 1.0) < 0.02);
  }

  TEST_CASE("norm-preserving gain by construction") {
    Rng rng(3);
    const auto m = moments(Activation::HardTanh, 0.1, rng);
    const double sw = 1.0 / m.mu1;
    CHECK(sw * m.mu1 == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("orthogonal init") {
    Rng rng(4);
    const Matrix q = init_orthogonal(30, 1.0, rng);
    CHECK(orthogonality_error(q) < 1e-10);
    const Matrix s = init_orthogonal(30, 1.7, rng);
    const Vector sv = sym_eigenvalues(Matrix(s.transpose() * s)).array().sqrt();
    CHECK((sv.array() - 1.7).abs().maxCoeff() < 1e-10);
  }

  TEST_CASE("orthogonal linear network: VNI = 1/N and m1 = sigma_w^(2L)") {
    for (double sigma_w : {1.0, 1.1}) {
      Rng rng(5);
      const int depth = 7, width = 20;
      NetworkSpec spec{depth, width, width, 0, Activation::Linear};
      InitializerSpec init;
      init.kind = InitKind::Orthogonal;
      init.sigma_w_sq = sigma_w * sigma_w;
      const Network net = initialize_network(spec, init, rng);
      const auto jv = vni_from_jacobian(jacobian(net, Vector::Zero(width)), 0.1);
      CHECK(jv.value == doctest::Approx(1.0 / width).epsilon(1e-10));
      CHECK(jv.moments.m1 == doctest::Approx(std::pow(sigma_w, 2 * depth)).epsilon(1e-10));
    }
  }

  TEST_CASE("semi-orthogonal rectangular layers") {
    Rng rng(6);
    const Matrix w = init_semi_orthogonal(10, 30, 1.0, rng);  // 30 x 10
    CHECK(w.rows() == 30);
    const Matrix g = w.transpose() * w * (10.0 / 30.0);
    CHECK((g - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("bottleneck rank 1") {
    Rng rng(7);
    const Matrix w = init_bottleneck(40, 40, 1, rng);
    CHECK(numerical_rank(w, 1e-10) == 1);
  }

  TEST_CASE("bottleneck rank bound over 100 draws") {
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
      const int nb = 1 + t % 5;
      const Matrix w = init_bottleneck(20, 24, nb, rng, t % 2 == 1);
      CHECK(numerical_rank(w, 1e-10) <= nb);
    }
  }

  TEST_CASE("bottleneck entry variance times N_mean is one") {
    Rng rng(9);
    const Eigen::Index ni = 300, no = 200;
    double acc = 0.0;
    const int draws = 20;
    for (int t = 0; t < draws; ++t) acc += entry_variance(init_bottleneck(ni, no, 30, rng));
    CHECK(std::abs(acc / draws * 0.5 * static_cast<double>(ni + no) - 1.0) < 0.05);
  }

  TEST_CASE("bottleneck full rank when N_b = N") {
    Rng rng(10);
    const Matrix w = init_bottleneck(30, 30, 30, rng);
    const Vector ev = sym_eigenvalues(Matrix(w.transpose() * w));
    CHECK(std::sqrt(ev(ev.size() - 1)) > 1e-8 * std::sqrt(ev(0)));
  }

  TEST_CASE("bottleneck rejects out-of-range N_b") {
    Rng rng(11);
    CHECK_THROWS(init_bottleneck(5, 8, 0, rng));
    CHECK_THROWS(init_bottleneck(5, 8, 6, rng));
  }

  TEST_CASE("householder single reflection") {
    HouseholderStack s;
    s.vectors = Matrix::Zero(2, 2);
    s.vectors(0, 0) = 1.0;  // H_1 about e_1
    s.vectors(1, 1) = 1.0;  // H_2 about e_2
    HouseholderStack one;
    one.vectors = Matrix::Zero(2, 1);
    one.vectors(0, 0) = 1.0;
    // A one-column stack in a 2-d space is the single reflection.
    const Matrix h = householder_materialize(one);
    CHECK(h(0, 0) == -1.0);
    CHECK(h(0, 1) == 0.0);
    CHECK(h(1, 0) == 0.0);
    CHECK(h(1, 1) == 1.0);
    const Matrix both = householder_materialize(s);
    CHECK(both == -Matrix::Identity(2, 2));
  }

  TEST_CASE("householder determinant and orthogonality") {
    Rng rng(12);
    for (Eigen::Index n : {1, 2, 5, 16}) {
      const auto stack = householder_init(n, rng);
      const Matrix w = householder_materialize(stack);
      CHECK(orthogonality_error(w) < 1e-10);
      CHECK(w.determinant() == doctest::Approx(n % 2 == 0 ? 1.0 : -1.0).epsilon(1e-8));
    }
  }

  TEST_CASE("householder zero vector is rejected") {
    HouseholderStack s;
    s.vectors = Matrix::Identity(3, 3);
    s.vectors.col(1).setZero();
    CHECK_THROWS(householder_materialize(s));
  }

  TEST_CASE("householder backward matches finite differences") {
    Rng rng(13);
    auto stack = householder_init(6, rng);
    const Matrix c = sample_gaussian<double>(6, 6, 0.0, 1.0, rng);
    auto loss = [&](const HouseholderStack& s) {
      const Matrix w = householder_materialize(s);
      return w.cwiseProduct(c).sum() + (w * w).trace();
    };
    const Matrix w = householder_materialize(stack);
    const Matrix upstream = c + 2.0 * w.transpose();  // d tr(W W)/dW = 2 W^T
    const Matrix grad = householder_backward(stack, upstream);
    const double eps = 1e-6;
    for (Eigen::Index j = 0; j < 6; ++j)
      for (Eigen::Index i = 0; i < 6; ++i) {
        auto up = stack, down = stack;
        up.vectors(i, j) += eps;
        down.vectors(i, j) -= eps;
        const double fd = (loss(up) - loss(down)) / (2 * eps);
        CHECK(std::abs(fd - grad(i, j)) <= 1e-5 * std::max({std::abs(fd), std::abs(grad(i, j)), 1e-3}));
      }
  }

  TEST_CASE("householder stays orthogonal under arbitrary updates") {
    Rng rng(14);
    auto stack = householder_init(12, rng);
    for (int t = 0; t < 100; ++t) stack.vectors += sample_gaussian<double>(12, 12, 0.0, 0.25, rng);
    CHECK(orthogonality_error(householder_materialize(stack)) < 1e-6);
  }

  TEST_CASE("initializers are deterministic given the seed") {
    for (auto kind : {InitKind::ScaledGaussian, InitKind::ScaledUniform, InitKind::Orthogonal, InitKind::Bottleneck,
                      InitKind::Householder}) {
      NetworkSpec spec{3, 8, 5, 2, Activation::Tanh};
      InitializerSpec init;
      init.kind = kind;
      Rng a(99), b(99);
      const Network x = initialize_network(spec, init, a);
      const Network y = initialize_network(spec, init, b);
      for (std::size_t l = 0; l < x.layers.size(); ++l) CHECK(x.layers[l].weight == y.layers[l].weight);
      CHECK(x.readout->weight == y.readout->weight);
      CHECK(parse_init_kind(to_string(kind)) == kind);
    }
  }

  TEST_CASE("biases start at zero") {
    Rng rng(15);
    const Network net = initialize_network({4, 8, 6, 3, Activation::ReLU}, {}, rng);
    for (const auto& l : net.layers) CHECK(l.bias.cwiseAbs().maxCoeff() == 0.0);
    CHECK(net.readout->bias.cwiseAbs().maxCoeff() == 0.0);
  }
}
