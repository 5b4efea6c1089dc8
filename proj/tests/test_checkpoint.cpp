// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>

#include "mvksr/checkpoint.hpp"
#include "mvksr/error.hpp"
#include "mvksr/fs_util.hpp"
#include "mvksr/net.hpp"
#include "test_util.hpp"

using namespace mvksr;
using mvksr::testing::random_tensor;

namespace {

ParamSet small_set() {
  ParamSet p;
  p.add("a.w", random_tensor({2, 3, 3, 3}, 1));
  p.add("a.b", random_tensor({2}, 2));
  p.add("scalarish", random_tensor({1}, 3));
  p.add("z.empty", Tensor::zeros({0, 4}));
  return p;
}

ErrorCode code_of(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("deserialize accepted corrupt bytes");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("checkpoint layout") {
  ParamSet p;
  p.add("w", Tensor({2}, {1.0, -2.0}));
  const std::string b = serialize_checkpoint(p);
  // magic, version, count, name, rank, dim, 2 floats, crc
  CHECK(b.size() == 4 + 4 + 4 + 2 + 1 + 1 + 4 + 8 + 4);
  CHECK(b.substr(0, 4) == "MVKS");
  CHECK(b[4] == 1);
  CHECK(b[8] == 1);
  CHECK(b[12] == 1);
  CHECK(b[14] == 'w');
  CHECK(b[15] == 1);
  CHECK(b[16] == 2);
  // 1.0f = 0x3f800000, little-endian.
  CHECK(static_cast<unsigned char>(b[20]) == 0x00);
  CHECK(static_cast<unsigned char>(b[23]) == 0x3f);
}

TEST_CASE("checkpoint round trip") {
  ParamSet p = small_set();
  const std::string b1 = serialize_checkpoint(p);
  ParamSet q = deserialize_checkpoint(b1);
  CHECK(serialize_checkpoint(q) == b1);
  REQUIRE(q.size() == p.size());
  for (const auto& [name, t] : p) {
    const Tensor& u = q.at(name);
    CHECK(u.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i)
      CHECK(u.data()[i] == static_cast<double>(static_cast<float>(t.data()[i])));
    CHECK(u.requires_grad());
  }

  const auto dir = std::filesystem::temp_directory_path() / "mvksr_test_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(p, dir / "p.ckpt");
  CHECK(read_file(dir / "p.ckpt") == b1);
  CHECK(serialize_checkpoint(load_checkpoint(dir / "p.ckpt")) == b1);
  try {
    load_checkpoint(dir / "missing.ckpt");
    FAIL("missing file loaded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint corruption") {
  const std::string b = serialize_checkpoint(small_set());
  for (std::size_t n : {std::size_t{4}, std::size_t{12}, std::size_t{15}, std::size_t{16},
                        b.size() / 2, b.size() - 1})
    CHECK(code_of(b.substr(0, n)) == ErrorCode::kBadCrc);

  std::string magic = b;
  magic[0] = 'X';
  CHECK(code_of(magic) == ErrorCode::kBadMagic);
  CHECK(code_of("") == ErrorCode::kBadMagic);

  std::string version = b;
  version[4] = 2;
  CHECK(code_of(version) == ErrorCode::kBadVersion);

  for (std::size_t pos : {std::size_t{9}, b.size() / 2, b.size() - 1}) {
    std::string flipped = b;
    flipped[pos] = static_cast<char>(flipped[pos] ^ 0x10);
    CHECK(code_of(flipped) == ErrorCode::kBadCrc);
  }
}

TEST_CASE("split prefix") {
  ParamSet p = small_set();
  ParamSet a = split_prefix(p, "a.");
  CHECK(a.size() == 2);
  CHECK(p.size() == 2);
  CHECK(a.contains("a.w"));
  CHECK_FALSE(p.contains("a.w"));
}

TEST_CASE("default model checkpoint size") {
  NetworkConfig cfg;
  const std::string b = serialize_checkpoint(init_params(cfg));
  MESSAGE("default checkpoint bytes: " << b.size());
  CHECK(b.size() >= 2'000'000);
  CHECK(b.size() <= 12'000'000);
}

TEST_CASE("training state keeps full precision") {
  const ParamSet p = small_set();
  const std::string bytes = serialize_state(p);
  CHECK(bytes.substr(0, 4) == "MVKT");
  const ParamSet back = deserialize_state(bytes);
  REQUIRE(back.size() == p.size());
  for (const auto& [name, t] : p)
    CHECK(mvksr::testing::bitwise_equal(t.data(), back.at(name).data()));
  CHECK(serialize_state(back) == bytes);

  // The two archive kinds do not read each other.
  try {
    deserialize_checkpoint(bytes);
    FAIL("a state file was accepted as a checkpoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadMagic);
  }
  CHECK_THROWS_AS(deserialize_state(serialize_checkpoint(p)), Error);
  CHECK_THROWS_AS(deserialize_state(bytes.substr(0, bytes.size() - 3)), Error);
}
