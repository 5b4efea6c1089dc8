// SPDX-License-Identifier: Apache-2.0
#include "mvksr/fs_util.hpp"

#include <fstream>
#include <sstream>

#include "mvksr/error.hpp"

namespace mvksr {

namespace fs = std::filesystem;

fs::path temp_path_for(const fs::path& target) {
  fs::path tmp = target;
  tmp += ".tmp";
  return tmp;
}

void commit_temp(const fs::path& tmp, const fs::path& target) {
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::kIo, "cannot move output into place at '" + target.string() + "'");
  }
}

void write_bytes_atomic(const fs::path& path, const std::string& bytes) {
  const auto tmp = temp_path_for(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      fs::remove(tmp);
      fail(ErrorCode::kIo, "short write to '" + path.string() + "'");
    }
  }
  commit_temp(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, text);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mvksr
