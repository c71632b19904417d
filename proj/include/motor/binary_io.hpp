#pragma once

// Little-endian primitive serialization for checkpoints.

#include "motor/autograd.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace motor::bin {

inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void write_i64(std::ostream& out, std::int64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("truncated binary stream");
  return v;
}
inline std::int64_t read_i64(std::istream& in) {
  std::int64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("truncated binary stream");
  return v;
}
inline double read_f64(std::istream& in) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("truncated binary stream");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const auto n = read_u64(in);
  if (n > (1ull << 32)) throw std::runtime_error("implausible string length in binary stream");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("truncated binary stream");
  return s;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

inline Matrix read_matrix(std::istream& in) {
  const auto r = read_u64(in), c = read_u64(in);
  if (r > (1ull << 28) || c > (1ull << 28) || r * c > (1ull << 30)) throw std::runtime_error("implausible matrix shape");
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  if (m.size() && !in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()))) {
    throw std::runtime_error("truncated binary stream");
  }
  return m;
}

}  // namespace motor::bin
