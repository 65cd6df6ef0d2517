#pragma once

// Little-endian primitives shared by the raw video, flow and checkpoint containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

namespace stbn {

namespace detail {

template <class U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) r |= ((v >> (8 * i)) & 0xff) << (8 * (sizeof(U) - 1 - i));
    return r;
  }
}

}  // namespace detail

inline void write_u32(std::ostream& os, std::uint32_t v) {
  v = detail::to_le(v);
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_i32(std::ostream& os, std::int32_t v) { write_u32(os, static_cast<std::uint32_t>(v)); }
inline void write_u64(std::ostream& os, std::uint64_t v) {
  v = detail::to_le(v);
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return detail::to_le(v);
}
inline std::int32_t read_i32(std::istream& is) { return static_cast<std::int32_t>(read_u32(is)); }
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return detail::to_le(v);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is, std::uint32_t max_len = 1u << 26) {
  const std::uint32_t n = read_u32(is);
  if (!is || n > max_len) {
    is.setstate(std::ios::failbit);
    return {};
  }
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

inline void write_f32_array(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float f : values) write_u32(os, std::bit_cast<std::uint32_t>(f));
  }
}
inline void read_f32_array(std::istream& is, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float& f : values) f = std::bit_cast<float>(read_u32(is));
  }
}

}  // namespace stbn
