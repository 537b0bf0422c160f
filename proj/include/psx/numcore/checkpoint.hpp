#pragma once

// PSXCKPT1 layout (all integers little-endian):
//   magic        8 bytes  "PSXCKPT1"
//   meta_len     u32, followed by meta_len bytes of UTF-8 key=value lines
//   slot_count   u32
//   per slot:    u32 name_len, name bytes, u32 rank, u64 dims[rank],
//                u8 dtype (4 = f32, 8 = f64), u64 byte offset into the data block
//   data block   raw little-endian values of every slot, in manifest order

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "psx/numcore/param_store.hpp"

namespace psx {

inline constexpr char kCheckpointMagic[8] = {'P', 'S', 'X', 'C', 'K', 'P', 'T', '1'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::uint8_t dtype = 8;
  std::uint64_t offset = 0;
};

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint8_t>>;
  const Bits b = std::bit_cast<Bits>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((b >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint8_t>>;
  if (pos + sizeof(U) > in.size()) throw CheckpointError("checkpoint truncated");
  Bits b = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    b |= static_cast<Bits>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return std::bit_cast<U>(b);
}

}  // namespace detail

template <typename T>
std::string encode_checkpoint(const ParamStore<T>& params, const std::string& meta = {}) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, slot] : params.slots()) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const auto& shape = slot.value.shape();
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) detail::put_le<std::uint64_t>(out, d);
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
    detail::put_le<std::uint64_t>(out, offset);
    offset += slot.value.size() * sizeof(T);
  }
  for (const auto& [name, slot] : params.slots()) {
    for (T v : slot.value.values()) detail::put_le<T>(out, v);
  }
  return out;
}

struct DecodedCheckpoint {
  std::string meta;
  std::vector<CheckpointEntry> entries;
  std::vector<std::vector<double>> values;
};

inline DecodedCheckpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CheckpointError("bad checkpoint magic header (expected PSXCKPT1)");
  }
  std::size_t pos = sizeof(kCheckpointMagic);
  DecodedCheckpoint out;
  const auto meta_len = detail::get_le<std::uint32_t>(bytes, pos);
  if (pos + meta_len > bytes.size()) throw CheckpointError("checkpoint truncated");
  out.meta = bytes.substr(pos, meta_len);
  pos += meta_len;
  const auto count = detail::get_le<std::uint32_t>(bytes, pos);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = detail::get_le<std::uint32_t>(bytes, pos);
    if (pos + name_len > bytes.size()) throw CheckpointError("checkpoint truncated");
    e.name = bytes.substr(pos, name_len);
    pos += name_len;
    const auto rank = detail::get_le<std::uint32_t>(bytes, pos);
    if (rank == 0 || rank > 2) throw CheckpointError("slot '" + e.name + "' has unsupported rank");
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(detail::get_le<std::uint64_t>(bytes, pos));
    e.dtype = detail::get_le<std::uint8_t>(bytes, pos);
    if (e.dtype != 4 && e.dtype != 8) throw CheckpointError("slot '" + e.name + "' has unknown dtype");
    e.offset = detail::get_le<std::uint64_t>(bytes, pos);
    out.entries.push_back(std::move(e));
  }
  const std::size_t data_start = pos;
  for (const auto& e : out.entries) {
    std::size_t n = 1;
    for (std::size_t d : e.shape) n *= d;
    std::size_t p = data_start + e.offset;
    if (p + n * e.dtype > bytes.size()) throw CheckpointError("checkpoint truncated in slot '" + e.name + "'");
    std::vector<double> vals(n);
    for (std::size_t k = 0; k < n; ++k) {
      vals[k] = e.dtype == 4 ? static_cast<double>(detail::get_le<float>(bytes, p)) : detail::get_le<double>(bytes, p);
    }
    out.values.push_back(std::move(vals));
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const std::string& meta = {}) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot open '" + path + "' for writing");
  const std::string bytes = encode_checkpoint(params, meta);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::ios_base::failure("write failed for '" + path + "'");
}

inline DecodedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

/// Copies checkpoint values into an existing store, converting precision.
/// Every slot of the store must be present with an identical shape.
template <typename T>
void restore_into(const DecodedCheckpoint& ckpt, ParamStore<T>& params) {
  for (std::size_t i = 0; i < ckpt.entries.size(); ++i) {
    const auto& e = ckpt.entries[i];
    if (!params.contains(e.name)) throw CheckpointError("checkpoint slot '" + e.name + "' not in model");
    auto& dst = params.value(e.name);
    if (dst.shape() != e.shape) {
      throw CheckpointError("shape mismatch for slot '" + e.name + "': checkpoint " +
                            Tensor<T>::shape_string(e.shape) + " vs model " + dst.shape_string());
    }
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(ckpt.values[i][k]);
  }
  if (ckpt.entries.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.entries.size()) + " slots, model has " +
                          std::to_string(params.size()));
  }
}

}  // namespace psx
