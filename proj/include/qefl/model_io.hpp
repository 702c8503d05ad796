#pragma once
// Model file format, bit-exact across platforms:
//   bytes 0..7   magic "QEFLMDL1"
//   u32          number of dims (input, hidden..., output)
//   u32 * ndims  the dims
//   f64 * p      flat parameters in packing order
// All integers and reals little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "qefl/arch.hpp"

namespace qefl {

inline constexpr char kModelMagic[8] = {'Q', 'E', 'F', 'L', 'M', 'D', 'L', '1'};

namespace detail {

inline void write_le32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline void write_le64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint32_t read_le32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (in.gcount() != 4) {
    throw std::runtime_error("model: truncated file " + path);
  }
  return std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) |
         (std::uint32_t(bytes[2]) << 16) | (std::uint32_t(bytes[3]) << 24);
}

inline std::uint64_t read_le64(std::istream& in, const std::string& path) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (in.gcount() != 8) {
    throw std::runtime_error("model: truncated file " + path);
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | bytes[i];
  }
  return v;
}

}  // namespace detail

inline void save_model(const std::string& path, const QennArchitecture& arch,
                       const ParamVector& params) {
  check_param_size(arch, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("model: cannot open " + path + " for writing");
  }
  out.write(kModelMagic, sizeof(kModelMagic));
  detail::write_le32(out, static_cast<std::uint32_t>(arch.hidden_dims.size() + 2));
  detail::write_le32(out, static_cast<std::uint32_t>(arch.input_dim));
  for (std::size_t d : arch.hidden_dims) {
    detail::write_le32(out, static_cast<std::uint32_t>(d));
  }
  detail::write_le32(out, static_cast<std::uint32_t>(arch.output_dim));
  for (double v : params) {
    detail::write_le64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) {
    throw std::runtime_error("model: write failure on " + path);
  }
}

inline std::pair<QennArchitecture, ParamVector> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("model: cannot open " + path);
  }
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kModelMagic, 8) != 0) {
    throw std::runtime_error("model: bad magic in " + path);
  }
  const std::uint32_t ndims = detail::read_le32(in, path);
  if (ndims < 3) {
    throw std::runtime_error("model: need at least input, one hidden and output dim in " + path);
  }
  QennArchitecture arch;
  arch.input_dim = detail::read_le32(in, path);
  for (std::uint32_t i = 0; i + 2 < ndims; ++i) {
    arch.hidden_dims.push_back(detail::read_le32(in, path));
  }
  arch.output_dim = detail::read_le32(in, path);
  validate(arch);

  ParamVector params(arch.param_count());
  for (double& v : params) {
    v = std::bit_cast<double>(detail::read_le64(in, path));
  }
  return {std::move(arch), std::move(params)};
}

}  // namespace qefl
