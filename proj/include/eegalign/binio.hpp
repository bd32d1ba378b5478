#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegalign/error.hpp"

namespace eegalign {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Little-endian float32 blobs back every binary format in this project.
// Hosts are assumed little-endian (x86/ARM64); no byte swapping is done.

inline std::vector<float> read_f32le(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kFormat, "missing file: " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamoff bytes = in.tellg();
  in.seekg(0, std::ios::beg);
  require(bytes % 4 == 0, ErrorKind::kCorruption,
          path.string() + ": byte count not a multiple of 4");
  std::vector<float> data(static_cast<std::size_t>(bytes) / 4);
  if (!data.empty()) {
    in.read(reinterpret_cast<char*>(data.data()), bytes);
    require(in.good(), ErrorKind::kIo, "short read: " + path.string());
  }
  return data;
}

inline void write_f32le(const fs::path& path, const float* data,
                        std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * 4));
  require(out.good(), ErrorKind::kIo, "short write: " + path.string());
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kFormat, "missing file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot open for write: " + path.string());
  out << j.dump(2) << "\n";
}

// Output-directory guard: a target is either fresh or empty, never appended.
inline void ensure_fresh_dir(const fs::path& dir) {
  if (fs::exists(dir)) {
    require(fs::is_directory(dir), ErrorKind::kValidation,
            dir.string() + " exists and is not a directory");
    require(fs::is_empty(dir), ErrorKind::kValidation,
            "refusing to write into non-empty directory " + dir.string());
  } else {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::kIo, "cannot create " + dir.string());
  }
}

}  // namespace eegalign
