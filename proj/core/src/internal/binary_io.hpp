#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gdpr/errors.hpp"

namespace gdpr::internal {

static_assert(sizeof(float) == 4);

inline std::uint32_t to_little_endian(std::uint32_t v) noexcept {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

// Raw little-endian float32 array.
inline void write_f32(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (const float v : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = to_little_endian(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
}

inline void read_f32(std::istream& in, std::span<float> values) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = to_little_endian(bits);
      std::memcpy(&v, &bits, 4);
    }
  }
}

inline void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_f32(out, values);
  if (!out) throw IoError("failed writing " + path.string());
}

// Reads exactly `count` floats; FormatError when the file size differs.
inline std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t count) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw FormatError("cannot stat " + path.string());
  if (size != count * sizeof(float)) {
    throw FormatError(path.filename().string() + " holds " + std::to_string(size) +
                      " bytes, manifest implies " + std::to_string(count * sizeof(float)));
  }
  std::vector<float> values(count);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  read_f32(in, values);
  if (!in && count > 0) throw FormatError("short read from " + path.string());
  return values;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gdpr::internal
