#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vnl/activations.hpp"
#include "vnl/householder.hpp"
#include "vnl/linalg.hpp"

namespace vnl {

/// L hidden layers of width N (the backbone) plus an optional linear readout.
struct NetworkSpec {
  int depth = 1;
  int width = 1;
  int input_dim = 1;
  int num_classes = 0;  // 0: no readout head
  Activation activation = Activation::Tanh;

  void validate() const;
};

enum class Parametrization { Dense, Householder };

std::string to_string(Parametrization p);
Parametrization parse_parametrization(std::string_view name);

/// One affine map h = W x + b. When `reflectors` is set, `weight` is the
/// materialization of the stack and the stack is the trainable parameter.
struct Layer {
  Matrix weight;
  Vector bias;
  std::optional<HouseholderStack> reflectors;

  void rematerialize();
};

struct Network {
  NetworkSpec spec;
  Parametrization parametrization = Parametrization::Dense;
  std::vector<Layer> layers;  // backbone, layers[0] maps input_dim -> width
  std::optional<Layer> readout;

  void validate() const;
};

/// Per-layer activations for a batch (one sample per row).
struct ForwardTrace {
  std::vector<Matrix> pre;   // h_1 .. h_L
  std::vector<Matrix> post;  // x_0 .. x_L
  std::optional<Matrix> logits;

  const Matrix& output() const { return logits ? *logits : post.back(); }
};

ForwardTrace forward(const Network& net, const Eigen::Ref<const Matrix>& batch);

/// Backbone output x_L only, without keeping intermediate layers.
Matrix propagate(const Network& net, const Eigen::Ref<const Matrix>& batch);

struct LayerGradient {
  Matrix weight;                     // dLoss/dW (dense view, also for Householder layers)
  Vector bias;
  std::optional<Matrix> reflectors;  // dLoss/dv_i, column i
};

struct Gradients {
  std::vector<LayerGradient> layers;
  std::optional<LayerGradient> readout;
  Matrix input;            // dLoss/dx_0, batch x input_dim (empty unless requested)
  Matrix backbone_output;  // dLoss/dx_L, batch x width
};

/// Back-propagates `output_grad` = dLoss/d(output) where output is the
/// logits if the network has a readout, x_L otherwise.
Gradients backward(const Network& net, const ForwardTrace& trace, const Eigen::Ref<const Matrix>& output_grad,
                   bool with_input_grad = true);

/// dx_L/dx_0 = D_L W_L ... D_1 W_1 at a single input (readout excluded).
Matrix jacobian(const Network& net, const Eigen::Ref<const Vector>& x0);

}  // namespace vnl
