// SPDX-License-Identifier: Apache-2.0
#include "mvksr/kv.hpp"

#include <fmt/format.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "mvksr/error.hpp"

namespace mvksr {

std::string format_double(double v) { return fmt::format("{}", v); }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
    fail(ErrorCode::kInvalidArgument, what + ": '" + text + "' is not a finite number");
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (t.empty() || t[0] == '-' || end != t.c_str() + t.size() || errno == ERANGE)
    fail(ErrorCode::kInvalidArgument, what + ": '" + text + "' is not an unsigned integer");
  return v;
}

long long parse_int(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE)
    fail(ErrorCode::kInvalidArgument, what + ": '" + text + "' is not an integer");
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  fail(ErrorCode::kInvalidArgument, what + ": '" + text + "' is not a boolean");
}

const std::string& KvBlock::get(const std::string& key, const std::string& origin) const {
  auto it = values.find(key);
  if (it == values.end())
    fail(ErrorCode::kFormat, origin + ":" + std::to_string(first_line) + ": missing key '" +
                                 key + "'");
  return it->second;
}

std::vector<KvBlock> parse_kv_blocks(const std::string& text, const std::string& origin) {
  std::vector<KvBlock> blocks;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool open = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) {
      open = false;
      continue;
    }
    if (line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      fail(ErrorCode::kFormat,
           origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    if (!open) {
      blocks.push_back({line_no, {}});
      open = true;
    }
    const std::string key = trim(line.substr(0, eq));
    if (!blocks.back().values.emplace(key, trim(line.substr(eq + 1))).second)
      fail(ErrorCode::kFormat,
           origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return blocks;
}

}  // namespace mvksr
