#pragma once

#include <filesystem>
#include <iosfwd>

#include "vnl/network.hpp"

namespace vnl {

// Layout (little-endian):
//   "VNLB" | u32 version | i32 depth, width, input_dim, num_classes
//   | string activation | string parametrization
//   | per backbone layer: matrix W, matrix b (N x 1), u8 has_reflectors [, matrix V]
//   | u8 has_readout [, matrix W, matrix b]
// A matrix is u64 rows, u64 cols, then rows*cols row-major f64.

void save_network(std::ostream& out, const Network& net);
Network load_network(std::istream& in);
void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

}  // namespace vnl
