// SPDX-License-Identifier: Apache-2.0
#include "mvksr/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <type_traits>

#include "mvksr/error.hpp"
#include "mvksr/fs_util.hpp"

namespace mvksr {

namespace {

template <class T>
void put(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end, const std::string& origin)
      : bytes_(bytes), end_(end), origin_(origin) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) fail(ErrorCode::kFormat, "checkpoint '" + origin_ + "' is truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  const std::string& origin_;
};

std::uint32_t crc32_of(const std::string& bytes, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string serialize(const ParamSet& tensors, const char* magic, bool wide) {
  std::string out = magic;
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    require(name.size() <= std::numeric_limits<std::uint16_t>::max(),
            "checkpoint: tensor name too long");
    require(t.rank() <= 255, "checkpoint: tensor rank too large");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    if (wide)
      for (double v : t.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    else
      for (double v : t.data())
        put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  put<std::uint32_t>(out, crc32_of(out, out.size()));
  return out;
}

ParamSet deserialize(const std::string& bytes, const std::string& origin, const char* magic,
                     bool wide) {
  if (bytes.size() < 4 || bytes.compare(0, 4, magic) != 0)
    fail(ErrorCode::kBadMagic, "'" + origin + "' is not a " + (wide ? "training state" : "checkpoint") + " (bad magic)");
  if (bytes.size() < 16) fail(ErrorCode::kBadCrc, "checkpoint '" + origin + "' is truncated");
  {
    Reader head(bytes, 8, origin);
    head.str(4);
    const auto version = head.get<std::uint32_t>();
    if (version != kCheckpointVersion)
      fail(ErrorCode::kBadVersion, "checkpoint '" + origin + "' has unsupported version " +
                                       std::to_string(version));
  }
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes, bytes.size(), origin);
  tail.str(body);
  const auto stored = tail.get<std::uint32_t>();
  if (stored != crc32_of(bytes, body))
    fail(ErrorCode::kBadCrc, "checkpoint '" + origin + "' failed its CRC check");

  Reader r(bytes, body, origin);
  r.str(8);
  const auto count = r.get<std::uint32_t>();
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name = r.str(len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.get<std::uint32_t>());
      if (d < 0) fail(ErrorCode::kFormat, "checkpoint '" + origin + "': bad dimension");
      n *= static_cast<std::size_t>(d);
    }
    if (n > body) fail(ErrorCode::kFormat, "checkpoint '" + origin + "' is truncated");
    std::vector<double> data(n);
    if (wide)
      for (double& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>());
    else
      for (double& v : data) v = std::bit_cast<float>(r.get<std::uint32_t>());
    if (out.contains(name))
      fail(ErrorCode::kFormat, "checkpoint '" + origin + "' repeats tensor '" + name + "'");
    out.add(name, Tensor(std::move(shape), std::move(data), true));
  }
  if (!r.done()) fail(ErrorCode::kFormat, "checkpoint '" + origin + "' has trailing bytes");
  return out;
}

}  // namespace

std::string serialize_checkpoint(const ParamSet& tensors) {
  return serialize(tensors, "MVKS", false);
}

ParamSet deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  return deserialize(bytes, origin, "MVKS", false);
}

std::string serialize_state(const ParamSet& tensors) { return serialize(tensors, "MVKT", true); }

ParamSet deserialize_state(const std::string& bytes, const std::string& origin) {
  return deserialize(bytes, origin, "MVKT", true);
}

void save_checkpoint(const ParamSet& tensors, const std::filesystem::path& path) {
  write_bytes_atomic(path, serialize_checkpoint(tensors));
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path), path.string());
}

void save_state(const ParamSet& tensors, const std::filesystem::path& path) {
  write_bytes_atomic(path, serialize_state(tensors));
}

ParamSet load_state(const std::filesystem::path& path) {
  return deserialize_state(read_file(path), path.string());
}

ParamSet split_prefix(ParamSet& from, const std::string& prefix) {
  ParamSet out;
  std::vector<std::string> names;
  for (const auto& [name, t] : from)
    if (name.starts_with(prefix)) names.push_back(name);
  for (const auto& name : names) {
    out.add(name, from.at(name));
    from.erase(name);
  }
  return out;
}

}  // namespace mvksr
