#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace ftamod::binio {

// Little-endian scalar IO, independent of host byte order.

template <typename U>
  requires std::is_unsigned_v<U>
inline void write_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes, sizeof(U));
}

template <typename U>
  requires std::is_unsigned_v<U>
inline U read_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw std::runtime_error("unexpected end of file");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  }
  return value;
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_le<std::uint8_t>(out, v); }
inline void write_u16(std::ostream& out, std::uint16_t v) { write_le<std::uint16_t>(out, v); }
inline void write_u32(std::ostream& out, std::uint32_t v) { write_le<std::uint32_t>(out, v); }
inline void write_i16(std::ostream& out, std::int16_t v) {
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(v));
}
inline void write_f32(std::ostream& out, float v) {
  write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint8_t read_u8(std::istream& in) { return read_le<std::uint8_t>(in); }
inline std::uint16_t read_u16(std::istream& in) { return read_le<std::uint16_t>(in); }
inline std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
inline std::int16_t read_i16(std::istream& in) {
  return static_cast<std::int16_t>(read_le<std::uint16_t>(in));
}
inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw std::runtime_error("bad magic: expected '" + std::string(magic) + "'");
  }
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::uint32_t max_len = 1u << 24) {
  const auto n = read_u32(in);
  if (n > max_len) throw std::runtime_error("string length out of range");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw std::runtime_error("unexpected end of file");
  return s;
}

// FNV-1a, used for cache keys and per-name seed derivation.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace ftamod::binio
