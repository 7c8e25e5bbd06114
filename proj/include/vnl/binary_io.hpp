#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "vnl/errors.hpp"
#include "vnl/linalg.hpp"

namespace vnl::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError(std::string("truncated file while reading ") + what);
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  const auto n = read_pod<std::uint32_t>(in, what);
  if (n > (1u << 20)) throw FormatError(std::string("implausible string length for ") + what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError(std::string("truncated file while reading ") + what);
  return s;
}

/// rows, cols (u64) then row-major f64 entries.
inline void write_matrix(std::ostream& out, const Eigen::Ref<const Matrix>& m) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

inline Matrix read_matrix(std::istream& in, const char* what) {
  const auto rows = read_pod<std::uint64_t>(in, what);
  const auto cols = read_pod<std::uint64_t>(in, what);
  if (rows > (1u << 28) || cols > (1u << 28) || rows * cols > (1ull << 32))
    throw FormatError(std::string("implausible matrix shape for ") + what);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  if (rm.size() && !in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double))))
    throw FormatError(std::string("truncated file while reading ") + what);
  return rm;
}

}  // namespace vnl::io
