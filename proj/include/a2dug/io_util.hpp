// Low-level file helpers shared by the bundle, checkpoint, and dataset
// formats: row-major little-endian float32 tensors, FNV-1a content
// checksums, and JSON file round-trips.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2dug/common.hpp"

namespace a2dug {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const void* data, std::size_t len) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(data, len);
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[std::size_t(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return "fnv1a64:" + s;
}

inline std::string checksum(const MatF& m) {
  return fnv1a64_hex(m.data(), sizeof(float) * std::size_t(m.size()));
}

inline void write_f32(const fs::path& path, const MatF& m) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(m.data()),
          std::streamsize(sizeof(float) * std::size_t(m.size())));
  if (!f) throw IoError("write failed: " + path.string());
}

inline MatF read_f32(const fs::path& path, Index rows, Index cols) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  MatF m(rows, cols);
  f.read(reinterpret_cast<char*>(m.data()),
         std::streamsize(sizeof(float) * std::size_t(m.size())));
  if (f.gcount() != std::streamsize(sizeof(float) * std::size_t(m.size())))
    throw IoError("short read (expected " + std::to_string(rows * cols) + " float32): " +
                  path.string());
  char extra;
  if (f.read(&extra, 1))
    throw IoError("trailing bytes beyond " + std::to_string(rows * cols) + " float32: " +
                  path.string());
  return m;
}

inline json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace a2dug
