#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "ccsnet/io/binary.hpp"
#include "ccsnet/nn/layers.hpp"

// Binary parameter file:
//   "CCSNCKPT" | u32 version | u32 count |
//   count x { u32 name_len | name | u32 ndim | u64 dims[ndim] | f32 values[] } |
//   u32 crc32 of everything before it.
// All integers and floats little-endian.
namespace ccsnet::nn {

inline constexpr char kCheckpointMagic[8] = {'C', 'C', 'S', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::vector<unsigned char>& buf, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  buf.insert(buf.end(), b, b + sizeof(U));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, std::size_t end, std::string file)
      : buf_(buf), end_(end), file_(std::move(file)) {}

  template <class U>
  U get() {
    need(sizeof(U));
    unsigned char b[sizeof(U)];
    std::memcpy(b, buf_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, b, sizeof(U));
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw FormatError("truncated checkpoint " + file_);
  }
  const std::vector<unsigned char>& buf_;
  std::size_t end_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors) {
  std::vector<unsigned char> buf(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_le<std::uint32_t>(buf, kCheckpointVersion);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.name.size()));
    buf.insert(buf.end(), nt.name.begin(), nt.name.end());
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.tensor.ndim()));
    for (auto d : nt.tensor.shape()) detail::put_le<std::uint64_t>(buf, d);
    for (T v : nt.tensor.values()) detail::put_le<float>(buf, static_cast<float>(v));
  }
  detail::put_le<std::uint32_t>(buf, io::crc32_bytes(buf.data(), buf.size()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PathError("cannot write checkpoint " + path.string());
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw PathError("failed writing checkpoint " + path.string());
}

/// Loads values into `tensors` in place. The stored table must match names
/// and shapes exactly.
template <class T>
void load_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PathError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string file = path.string();
  if (buf.size() < 8 + 4 + 4 + 4 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("not a checkpoint file: " + file);
  {
    detail::Reader crc_reader(buf, buf.size(), file);
    crc_reader.bytes(buf.size() - 4);
    const auto stored = crc_reader.get<std::uint32_t>();
    if (stored != io::crc32_bytes(buf.data(), buf.size() - 4))
      throw FormatError("checksum mismatch in checkpoint " + file);
  }
  detail::Reader rd(buf, buf.size() - 4, file);
  rd.bytes(8);
  const auto version = rd.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + file);
  const auto count = rd.get<std::uint32_t>();
  struct Entry {
    Shape shape;
    std::vector<float> values;
  };
  std::map<std::string, Entry> stored;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name = rd.bytes(rd.get<std::uint32_t>());
    Entry e;
    const auto nd = rd.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < nd; ++d) e.shape.push_back(static_cast<std::size_t>(rd.get<std::uint64_t>()));
    const std::size_t n = numel_of(e.shape);
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) e.values[i] = rd.get<float>();
    stored.emplace(name, std::move(e));
  }
  std::string problems;
  for (const auto& nt : tensors) {
    auto it = stored.find(nt.name);
    if (it == stored.end())
      problems += " missing " + nt.name + ";";
    else if (it->second.shape != nt.tensor.shape())
      problems += " " + nt.name + " has shape " + shape_str(it->second.shape) + ", model expects " +
                  shape_str(nt.tensor.shape()) + ";";
  }
  for (const auto& [name, e] : stored) {
    bool known = false;
    for (const auto& nt : tensors) known = known || nt.name == name;
    if (!known) problems += " unexpected " + name + ";";
  }
  if (!problems.empty()) throw FormatError("checkpoint " + file + " does not match the model:" + problems);
  for (const auto& nt : tensors) {
    auto t = nt.tensor;
    const auto& src = stored.at(nt.name).values;
    for (std::size_t i = 0; i < src.size(); ++i) t[i] = static_cast<T>(src[i]);
  }
}

}  // namespace ccsnet::nn
