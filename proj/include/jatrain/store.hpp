// store.hpp
//
// Atomic file persistence for session logs and service checkpoints. Content
// goes to a uniquely named temporary in the target directory, is flushed to
// disk, then renamed over the final path, so readers only ever see a
// complete previous version or a complete new one.

#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "jatrain/error.hpp"
#include "jatrain/json_io.hpp"
#include "jatrain/schema.hpp"

namespace jatrain {

namespace fs = std::filesystem;

inline void atomic_write(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()) +
                              "." + std::to_string(counter++));
  auto sys_fail = [&](const char* what) {
    const std::string msg = std::string(what) + " " + tmp.string() + ": " + std::strerror(errno);
    ::unlink(tmp.c_str());
    throw IoError(msg);
  };

  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot create " + tmp.string() + ": " + std::strerror(errno));
  std::size_t off = 0;
  while (off < content.size()) {
    const ssize_t n = ::write(fd, content.data() + off, content.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      sys_fail("write failed for");
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    sys_fail("fsync failed for");
  }
  if (::close(fd) != 0) sys_fail("close failed for");
  if (::rename(tmp.c_str(), path.c_str()) != 0) sys_fail("rename failed for");
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Canonical, schema-checked log text.
inline std::string log_text(const SessionLog& log) {
  const json j = to_json(log);
  try {
    schema::validate(j, schema::session_log());
  } catch (const SchemaError& e) {
    throw SchemaError(std::string("session log failed its schema: ") + e.what());
  }
  return canonical_dump(j);
}

inline void store_log(const SessionLog& log, const fs::path& path) { atomic_write(path, log_text(log)); }

inline SessionLog load_log(const fs::path& path) {
  const json j = parse_json_text(read_file(path), path.string());
  try {
    schema::validate(j, schema::session_log());
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return session_log_from_json(j);
}

}  // namespace jatrain
