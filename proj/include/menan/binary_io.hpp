#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "menan/error.hpp"

namespace menan::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written natively");

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError("unexpected end of binary stream");
  }
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  auto n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError("truncated string");
  return s;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> read_doubles(std::istream& in, std::size_t n) {
  std::vector<double> v(n);
  if (n && !in.read(reinterpret_cast<char*>(v.data()),
                    static_cast<std::streamsize>(n * sizeof(double)))) {
    throw IoError("truncated value block");
  }
  return v;
}

}  // namespace menan::io
