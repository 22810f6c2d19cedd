#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lnd/errors.hpp"

namespace lnd {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-rename so readers never observe a half-written file.
inline void atomic_write_text(const std::filesystem::path& path,
                              const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lnd
