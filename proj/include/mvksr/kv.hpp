// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented key=value text: blocks separated by blank lines, '#' comments.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mvksr {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

double parse_double(const std::string& text, const std::string& what);
std::uint64_t parse_u64(const std::string& text, const std::string& what);
long long parse_int(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);

struct KvBlock {
  int first_line = 0;  // 1-based, for diagnostics
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.contains(key); }
  /// Missing keys raise kFormat naming `origin` and the block's line.
  const std::string& get(const std::string& key, const std::string& origin) const;
};

/// Duplicate keys within a block and lines without '=' are kFormat errors.
std::vector<KvBlock> parse_kv_blocks(const std::string& text, const std::string& origin);

}  // namespace mvksr
