// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

namespace mvksr {

/// Sibling temp name for write-then-rename.
std::filesystem::path temp_path_for(const std::filesystem::path& target);
/// Renames a finished temp file over `target`.
void commit_temp(const std::filesystem::path& tmp, const std::filesystem::path& target);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_bytes_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace mvksr
