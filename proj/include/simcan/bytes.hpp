#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace simcan {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline Bytes concat(ByteView a, ByteView b) {
  Bytes out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline void append(Bytes& dst, ByteView src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

inline void put_u8(Bytes& dst, std::uint8_t v) { dst.push_back(v); }

inline void put_u16_be(Bytes& dst, std::uint16_t v) {
  dst.push_back(static_cast<std::uint8_t>(v >> 8));
  dst.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void put_u32_be(Bytes& dst, std::uint32_t v) {
  dst.push_back(static_cast<std::uint8_t>(v >> 24));
  dst.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  dst.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  dst.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void put_u64_be(Bytes& dst, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8)
    dst.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
}

inline std::uint16_t get_u16_be(ByteView src, std::size_t off) {
  return static_cast<std::uint16_t>((src[off] << 8) | src[off + 1]);
}

inline std::uint32_t get_u32_be(ByteView src, std::size_t off) {
  return (static_cast<std::uint32_t>(src[off]) << 24) |
         (static_cast<std::uint32_t>(src[off + 1]) << 16) |
         (static_cast<std::uint32_t>(src[off + 2]) << 8) |
         static_cast<std::uint32_t>(src[off + 3]);
}

inline std::string hex_encode(ByteView data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

inline int hex_nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Returns false on odd length or non-hex characters.
inline bool hex_decode(std::string_view hex, Bytes& out) {
  if (hex.size() % 2 != 0) return false;
  out.clear();
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_nibble(hex[i]);
    int lo = hex_nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return false;
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return true;
}

inline Bytes hex_decode_or_empty(std::string_view hex) {
  Bytes out;
  if (!hex_decode(hex, out)) out.clear();
  return out;
}

inline bool bytes_equal(ByteView a, ByteView b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size()) == 0);
}

}  // namespace simcan
