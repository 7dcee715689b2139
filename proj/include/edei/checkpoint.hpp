#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "edei/core.hpp"
#include "edei/nn.hpp"
#include "edei/scenario_io.hpp"

namespace edei {

// Layout: "EDEI", version byte, then until EOF one record per tensor:
//   u32 name length, name bytes, u32 rank, rank x u32 dims, f64 values.
// All integers and reals little-endian.

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Matrix value;

  bool operator==(const NamedTensor&) const = default;
};

namespace ckpt {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

inline void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

class Cursor {
 public:
  explicit Cursor(const std::string& data) : data_(data) {}

  bool done() const { return pos_ == data_.size(); }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n)
      throw FormatError("checkpoint: truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += 4;
    return v;
  }

  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt

/// Matrices are written with rank 2.
inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out = "EDEI";
  out.push_back(static_cast<char>(kCheckpointVersion));
  for (const auto& t : tensors) {
    ckpt::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    ckpt::put_u32(out, 2);
    ckpt::put_u32(out, static_cast<std::uint32_t>(t.value.rows));
    ckpt::put_u32(out, static_cast<std::uint32_t>(t.value.cols));
    for (double v : t.value.data) ckpt::put_f64(out, v);
  }
  return out;
}

/// Parses a whole checkpoint before returning anything. Rank-1 tensors load
/// as a single row.
inline std::vector<NamedTensor> decode_checkpoint(const std::string& data) {
  if (data.size() < 5 || data.compare(0, 4, "EDEI") != 0) throw FormatError("checkpoint: bad magic (not an EDEI checkpoint)");
  if (static_cast<std::uint8_t>(data[4]) != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(static_cast<unsigned char>(data[4])));
  const std::string body = data.substr(5);
  ckpt::Cursor cur(body);
  std::vector<NamedTensor> out;
  while (!cur.done()) {
    NamedTensor t;
    const std::uint32_t len = cur.u32("name length");
    t.name = cur.bytes(len, "name");
    const std::uint32_t rank = cur.u32("rank");
    if (rank > 2) throw FormatError("checkpoint: tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
    std::vector<std::uint32_t> dims;
    for (std::uint32_t k = 0; k < rank; ++k) dims.push_back(cur.u32("dims"));
    std::size_t rows = 1, cols = 1;
    if (rank == 1) cols = dims[0];
    if (rank == 2) rows = dims[0], cols = dims[1];
    if (cols != 0 && rows > (SIZE_MAX / 8) / cols) throw FormatError("checkpoint: tensor '" + t.name + "' is too large");
    cur.need(rows * cols * 8, "values");
    t.value = nn::Matrix(rows, cols);
    for (double& v : t.value.data) v = cur.f64("values");
    out.push_back(std::move(t));
  }
  return out;
}

inline void append_store(std::vector<NamedTensor>& out, const std::string& prefix, const nn::ParameterStore& store) {
  for (const auto& p : store.all()) out.push_back({prefix + p.name, p.value});
}

/// Fills every parameter of `store` from the tensors named prefix + name.
/// Nothing is modified unless all tensors are present with matching shapes.
inline void load_store(const std::vector<NamedTensor>& tensors, const std::string& prefix, nn::ParameterStore& store) {
  std::vector<const NamedTensor*> found;
  for (const auto& p : store.all()) {
    const std::string name = prefix + p.name;
    const NamedTensor* hit = nullptr;
    for (const auto& t : tensors)
      if (t.name == name) hit = &t;
    if (!hit) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (!hit->value.same_shape(p.value))
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + nn::shape_str(hit->value) + ", expected " +
                        nn::shape_str(p.value));
    found.push_back(hit);
  }
  for (std::size_t i = 0; i < found.size(); ++i) store[i].value = found[i]->value;
}

inline void save_checkpoint(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  write_text_file(path, encode_checkpoint(tensors));
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace edei
