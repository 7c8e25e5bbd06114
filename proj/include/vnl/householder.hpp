#pragma once

#include "vnl/linalg.hpp"

namespace vnl {

/// Orthogonal n x n matrix represented as W = H_k ... H_1, with
/// H_i = I - 2 v_i v_i^T / (v_i^T v_i). Column i of `vectors` is v_i;
/// trainable layers use k = n.
/// The scale-invariant form keeps W exactly orthogonal under any update of
/// the v_i, so no renormalization is needed during training.
struct HouseholderStack {
  Matrix vectors;

  Eigen::Index size() const { return vectors.rows(); }
  Eigen::Index count() const { return vectors.cols(); }
};

/// n reflections with i.i.d. Gaussian directions.
HouseholderStack householder_init(Eigen::Index n, Rng& rng);

/// Applies H_i to the rows of `target` in place: target <- H_i target.
void apply_reflection(const Eigen::Ref<const Vector>& v, Eigen::Ref<Matrix> target);

Matrix householder_materialize(const HouseholderStack& stack);

/// Gradient of a scalar loss with respect to every v_i (column i of the
/// result), given upstream = dLoss/dW for W = householder_materialize(stack).
Matrix householder_backward(const HouseholderStack& stack, const Eigen::Ref<const Matrix>& upstream);

}  // namespace vnl
