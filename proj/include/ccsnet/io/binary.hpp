#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"

namespace ccsnet::io {

inline std::uint32_t crc32_bytes(const void* data, std::size_t n, std::uint32_t crc = 0) {
  auto p = static_cast<const Bytef*>(data);
  uLong c = crc;
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PathError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PathError("cannot write " + path.string());
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) throw PathError("failed writing " + path.string());
}

/// Little-endian float32 encoding of `values`.
inline std::vector<unsigned char> encode_f32le(std::span<const float> values) {
  std::vector<unsigned char> out(values.size() * 4);
  std::memcpy(out.data(), values.data(), out.size());
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < out.size(); i += 4) std::reverse(out.begin() + i, out.begin() + i + 4);
  return out;
}

inline std::vector<float> decode_f32le(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() % 4 != 0) throw FormatError("corrupt length in " + name + ": not a whole number of floats");
  std::vector<unsigned char> b = bytes;
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < b.size(); i += 4) std::reverse(b.begin() + i, b.begin() + i + 4);
  std::vector<float> out(b.size() / 4);
  std::memcpy(out.data(), b.data(), b.size());
  return out;
}

}  // namespace ccsnet::io
