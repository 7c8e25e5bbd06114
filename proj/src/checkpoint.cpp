#include "vnl/checkpoint.hpp"

#include <fstream>

#include "vnl/binary_io.hpp"

namespace vnl {

namespace {

constexpr char kMagic[4] = {'V', 'N', 'L', 'B'};
constexpr std::uint32_t kVersion = 1;

void write_layer(std::ostream& out, const Layer& layer) {
  io::write_matrix(out, layer.weight);
  io::write_matrix(out, layer.bias);
}

Layer read_layer(std::istream& in) {
  Layer layer;
  layer.weight = io::read_matrix(in, "weight");
  const Matrix b = io::read_matrix(in, "bias");
  if (b.cols() != 1) throw FormatError("checkpoint: bias must be a column");
  layer.bias = b.col(0);
  return layer;
}

}  // namespace

void save_network(std::ostream& out, const Network& net) {
  net.validate();
  out.write(kMagic, 4);
  io::write_pod(out, kVersion);
  io::write_pod<std::int32_t>(out, net.spec.depth);
  io::write_pod<std::int32_t>(out, net.spec.width);
  io::write_pod<std::int32_t>(out, net.spec.input_dim);
  io::write_pod<std::int32_t>(out, net.spec.num_classes);
  io::write_string(out, to_string(net.spec.activation));
  io::write_string(out, to_string(net.parametrization));
  for (const Layer& layer : net.layers) {
    write_layer(out, layer);
    io::write_pod<std::uint8_t>(out, layer.reflectors ? 1 : 0);
    if (layer.reflectors) io::write_matrix(out, layer.reflectors->vectors);
  }
  io::write_pod<std::uint8_t>(out, net.readout ? 1 : 0);
  if (net.readout) write_layer(out, *net.readout);
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Network load_network(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  if (io::read_pod<std::uint32_t>(in, "version") != kVersion) throw FormatError("checkpoint: unsupported version");
  Network net;
  net.spec.depth = io::read_pod<std::int32_t>(in, "depth");
  net.spec.width = io::read_pod<std::int32_t>(in, "width");
  net.spec.input_dim = io::read_pod<std::int32_t>(in, "input_dim");
  net.spec.num_classes = io::read_pod<std::int32_t>(in, "num_classes");
  net.spec.activation = parse_activation(io::read_string(in, "activation"));
  net.parametrization = parse_parametrization(io::read_string(in, "parametrization"));
  net.spec.validate();
  if (net.spec.depth > 100000) throw FormatError("checkpoint: implausible depth");
  for (int l = 0; l < net.spec.depth; ++l) {
    Layer layer = read_layer(in);
    if (io::read_pod<std::uint8_t>(in, "reflector flag")) layer.reflectors = HouseholderStack{io::read_matrix(in, "reflectors")};
    net.layers.push_back(std::move(layer));
  }
  if (io::read_pod<std::uint8_t>(in, "readout flag")) net.readout = read_layer(in);
  net.validate();
  return net;
}

void save_network(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_network(out, net);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_network(in);
}

}  // namespace vnl
