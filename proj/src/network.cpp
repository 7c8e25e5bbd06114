#include "vnl/network.hpp"

#include <stdexcept>

namespace vnl {

void NetworkSpec::validate() const {
  if (depth < 1 || width < 1 || input_dim < 1)
    throw std::invalid_argument("NetworkSpec: depth, width and input_dim must be >= 1");
  if (num_classes < 0) throw std::invalid_argument("NetworkSpec: num_classes must be >= 0");
}

std::string to_string(Parametrization p) { return p == Parametrization::Dense ? "dense" : "householder"; }

Parametrization parse_parametrization(std::string_view name) {
  if (name == "dense") return Parametrization::Dense;
  if (name == "householder") return Parametrization::Householder;
  throw std::invalid_argument("unknown parametrization '" + std::string(name) + "'");
}

void Layer::rematerialize() {
  if (reflectors) weight = householder_materialize(*reflectors);
}

void Network::validate() const {
  spec.validate();
  if (layers.size() != static_cast<std::size_t>(spec.depth))
    throw DimensionError("Network: expected " + std::to_string(spec.depth) + " layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Eigen::Index fan_in = l == 0 ? spec.input_dim : spec.width;
    if (layers[l].weight.rows() != spec.width || layers[l].weight.cols() != fan_in ||
        layers[l].bias.size() != spec.width)
      throw DimensionError("Network: layer " + std::to_string(l + 1) + " has inconsistent shape");
  }
  if ((spec.num_classes > 0) != readout.has_value())
    throw DimensionError("Network: readout presence does not match num_classes");
  if (readout && (readout->weight.rows() != spec.num_classes || readout->weight.cols() != spec.width ||
                  readout->bias.size() != spec.num_classes))
    throw DimensionError("Network: readout has inconsistent shape");
}

namespace {

Matrix affine(const Layer& layer, const Eigen::Ref<const Matrix>& x) {
  Matrix h(x.rows(), layer.weight.rows());
  h.noalias() = x * layer.weight.transpose();
  h.rowwise() += layer.bias.transpose();
  return h;
}

void check_batch(const Network& net, const Eigen::Ref<const Matrix>& batch) {
  if (batch.cols() != net.spec.input_dim)
    throw DimensionError("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.spec.input_dim));
}

}  // namespace

ForwardTrace forward(const Network& net, const Eigen::Ref<const Matrix>& batch) {
  check_batch(net, batch);
  ForwardTrace trace;
  trace.pre.reserve(net.layers.size());
  trace.post.reserve(net.layers.size() + 1);
  trace.post.emplace_back(batch);
  for (const Layer& layer : net.layers) {
    trace.pre.push_back(affine(layer, trace.post.back()));
    trace.post.push_back(activate(net.spec.activation, trace.pre.back()));
  }
  if (net.readout) trace.logits = affine(*net.readout, trace.post.back());
  return trace;
}

Matrix propagate(const Network& net, const Eigen::Ref<const Matrix>& batch) {
  check_batch(net, batch);
  Matrix x = batch;
  for (const Layer& layer : net.layers) x = activate(net.spec.activation, affine(layer, x));
  return x;
}

Gradients backward(const Network& net, const ForwardTrace& trace, const Eigen::Ref<const Matrix>& output_grad,
                   bool with_input_grad) {
  const std::size_t depth = net.layers.size();
  if (trace.pre.size() != depth || trace.post.size() != depth + 1 || trace.logits.has_value() != net.readout.has_value())
    throw DimensionError("backward: trace does not belong to this network");
  const Eigen::Index batch = trace.post.front().rows();
  if (output_grad.rows() != batch || output_grad.cols() != trace.output().cols())
    throw DimensionError("backward: output gradient is " + shape_string(output_grad.rows(), output_grad.cols()) +
                         ", expected " + shape_string(batch, trace.output().cols()));

  Gradients grads;
  grads.layers.resize(depth);
  Matrix dx;  // dLoss/dx_l
  if (net.readout) {
    LayerGradient g;
    g.weight.noalias() = output_grad.transpose() * trace.post.back();
    g.bias = output_grad.colwise().sum().transpose();
    dx.noalias() = output_grad * net.readout->weight;
    grads.readout = std::move(g);
  } else {
    dx = output_grad;
  }
  if (dx.cols() != net.spec.width) throw DimensionError("backward: stale trace");
  grads.backbone_output = dx;

  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = net.layers[l];
    if (trace.pre[l].cols() != layer.weight.rows() || trace.post[l].cols() != layer.weight.cols())
      throw DimensionError("backward: stale trace at layer " + std::to_string(l + 1));
    const Matrix delta = dx.cwiseProduct(activate_derivative(net.spec.activation, trace.pre[l]));
    LayerGradient& g = grads.layers[l];
    g.weight.noalias() = delta.transpose() * trace.post[l];
    g.bias = delta.colwise().sum().transpose();
    if (layer.reflectors) g.reflectors = householder_backward(*layer.reflectors, g.weight);
    if (l > 0 || with_input_grad) {
      Matrix next(batch, layer.weight.cols());
      next.noalias() = delta * layer.weight;
      dx = std::move(next);
    }
  }
  if (with_input_grad) grads.input = std::move(dx);
  return grads;
}

Matrix jacobian(const Network& net, const Eigen::Ref<const Vector>& x0) {
  if (x0.size() != net.spec.input_dim)
    throw DimensionError("jacobian: input has length " + std::to_string(x0.size()) + ", expected " +
                         std::to_string(net.spec.input_dim));
  Vector x = x0;
  Matrix j = Matrix::Identity(net.spec.input_dim, net.spec.input_dim);
  for (const Layer& layer : net.layers) {
    const Vector h = layer.weight * x + layer.bias;
    const Vector d = activate_derivative(net.spec.activation, h);
    Matrix next(layer.weight.rows(), j.cols());
    next.noalias() = layer.weight * j;
    j = d.asDiagonal() * next;
    x = activate(net.spec.activation, h);
  }
  return j;
}

}  // namespace vnl
