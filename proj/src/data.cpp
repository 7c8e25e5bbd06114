#include "vnl/data.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>

#include "vnl/binary_io.hpp"
#include "vnl/errors.hpp"

namespace vnl {

Dataset Dataset::take(Eigen::Index n) const {
  if (n < 0) throw std::invalid_argument("Dataset::take: n must be >= 0");
  n = std::min(n, size());
  Dataset out;
  out.inputs = inputs.topRows(n);
  if (labeled()) out.labels.assign(labels.begin(), labels.begin() + n);
  out.num_classes = num_classes;
  out.name = name;
  return out;
}

void Dataset::validate() const {
  if (!inputs.allFinite()) throw NumericalError("Dataset '" + name + "': non-finite input");
  if (labeled()) {
    if (static_cast<Eigen::Index>(labels.size()) != size())
      throw DimensionError("Dataset '" + name + "': label count does not match sample count");
    for (int y : labels)
      if (y < 0 || y >= num_classes) throw std::invalid_argument("Dataset '" + name + "': label out of range");
  }
}

std::string to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::AND2:
      return "and2";
    case SyntheticTask::AND4:
      return "and4";
    case SyntheticTask::XOR2:
      return "xor2";
  }
  return "unknown";
}

SyntheticTask parse_synthetic_task(std::string_view name) {
  if (name == "and2") return SyntheticTask::AND2;
  if (name == "and4") return SyntheticTask::AND4;
  if (name == "xor2") return SyntheticTask::XOR2;
  throw std::invalid_argument("unknown synthetic task '" + std::string(name) + "'");
}

Dataset synthetic_task(SyntheticTask task) {
  const int bits = task == SyntheticTask::AND4 ? 4 : 2;
  const int patterns = 1 << bits;
  Dataset d;
  d.name = to_string(task);
  d.num_classes = task == SyntheticTask::AND4 ? 4 : 2;
  d.inputs.resize(patterns, bits);
  d.labels.resize(static_cast<std::size_t>(patterns));
  for (int p = 0; p < patterns; ++p) {
    std::array<int, 4> b{};
    // Bit x0 is the most significant so rows enumerate (-1,-1), (-1,1), ...
    for (int k = 0; k < bits; ++k) {
      b[static_cast<std::size_t>(k)] = (p >> (bits - 1 - k)) & 1;
      d.inputs(p, k) = b[static_cast<std::size_t>(k)] ? 1.0 : -1.0;
    }
    int y = 0;
    switch (task) {
      case SyntheticTask::AND2:
        y = b[0] & b[1];
        break;
      case SyntheticTask::AND4:
        y = 2 * (b[0] & b[1]) + (b[2] & b[3]);
        break;
      case SyntheticTask::XOR2:
        y = b[0] ^ b[1];
        break;
    }
    d.labels[static_cast<std::size_t>(p)] = y;
  }
  return d;
}

Dataset gaussian_probe(Eigen::Index n_samples, Eigen::Index dim, double sigma_x_sq, Rng& rng) {
  if (!(sigma_x_sq > 0.0)) throw std::invalid_argument("gaussian_probe: sigma_x_sq must be > 0");
  Dataset d;
  d.name = "gaussian_probe";
  d.inputs = sample_gaussian<double>(n_samples, dim, 0.0, sigma_x_sq, rng);
  return d;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& file) {
  if (bytes.size() < offset + 4) throw FormatError(file + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       const MnistOptions& options) {
  const std::string img_name = images.filename().string();
  const std::string lbl_name = labels.filename().string();
  const auto img = read_file(images);
  const auto lbl = read_file(labels);

  if (be32(img, 0, img_name) != 0x00000803u) throw FormatError(img_name + ": bad IDX magic (expected 0x00000803)");
  if (be32(lbl, 0, lbl_name) != 0x00000801u) throw FormatError(lbl_name + ": bad IDX magic (expected 0x00000801)");
  const std::size_t count = be32(img, 4, img_name);
  const std::size_t rows = be32(img, 8, img_name);
  const std::size_t cols = be32(img, 12, img_name);
  const std::size_t label_count = be32(lbl, 4, lbl_name);
  if (count != label_count)
    throw FormatError("image/label count mismatch: " + std::to_string(count) + " vs " + std::to_string(label_count));
  const std::size_t dim = rows * cols;
  if (img.size() < 16 + count * dim) throw FormatError(img_name + ": truncated pixel data");
  if (lbl.size() < 8 + count) throw FormatError(lbl_name + ": truncated label data");

  Dataset d;
  d.name = "mnist";
  d.num_classes = 10;
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int y = lbl[8 + i];
    if (y > 9) throw FormatError(lbl_name + ": label " + std::to_string(y) + " outside 0-9");
    d.labels[i] = y;
  }
  const double scale = options.scale ? 1.0 / 255.0 : 1.0;
  d.inputs.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < dim; ++k)
      d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = scale * img[16 + i * dim + k];
  if (options.center && count > 0) d.inputs.rowwise() -= d.inputs.colwise().mean();
  return d;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "label";
  for (Eigen::Index k = 0; k < data.input_dim(); ++k) out << ",x" << k;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (data.labeled()) out << data.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < data.input_dim(); ++k) out << ',' << data.inputs(i, k);
    out << '\n';
  }
  out.precision(old_precision);
}

namespace {
constexpr char kDatasetMagic[4] = {'V', 'N', 'L', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(std::ostream& out, const Dataset& data) {
  out.write(kDatasetMagic, 4);
  io::write_pod(out, kDatasetVersion);
  io::write_string(out, data.name);
  io::write_pod<std::int32_t>(out, data.num_classes);
  io::write_matrix(out, data.inputs);
  io::write_pod<std::uint64_t>(out, data.labels.size());
  for (int y : data.labels) io::write_pod<std::int32_t>(out, y);
}

Dataset load_dataset(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kDatasetMagic, 4) != 0) throw FormatError("dataset sidecar: bad magic");
  if (io::read_pod<std::uint32_t>(in, "version") != kDatasetVersion)
    throw FormatError("dataset sidecar: unsupported version");
  Dataset d;
  d.name = io::read_string(in, "name");
  d.num_classes = io::read_pod<std::int32_t>(in, "num_classes");
  d.inputs = io::read_matrix(in, "inputs");
  const auto n = io::read_pod<std::uint64_t>(in, "label count");
  if (n != 0 && n != static_cast<std::uint64_t>(d.inputs.rows())) throw FormatError("dataset sidecar: label count mismatch");
  d.labels.resize(n);
  for (auto& y : d.labels) y = io::read_pod<std::int32_t>(in, "labels");
  d.validate();
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_dataset(out, data);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_dataset(in);
}

}  // namespace vnl
