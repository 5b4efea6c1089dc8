// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor archive. Layout, all integers little-endian:
//   "MVKS" | u32 version (1) | u32 tensor count
//   per tensor: u16 name length | name (UTF-8) | u8 rank | rank x u32 dims |
//               numel x f32 data (row-major)
//   u32 CRC-32 of every preceding byte
// Tensors are written in ParamSet (lexicographic) order.
#pragma once

#include <filesystem>
#include <string>

#include "mvksr/params.hpp"

namespace mvksr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ParamSet& tensors);
/// `origin` only labels error messages. Loaded tensors require grad.
ParamSet deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

void save_checkpoint(const ParamSet& tensors, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

/// Same layout under magic "MVKT" with f64 data, for exact training resume.
std::string serialize_state(const ParamSet& tensors);
ParamSet deserialize_state(const std::string& bytes, const std::string& origin = "<memory>");
void save_state(const ParamSet& tensors, const std::filesystem::path& path);
ParamSet load_state(const std::filesystem::path& path);

/// Moves every tensor whose name starts with `prefix` out of `from`.
ParamSet split_prefix(ParamSet& from, const std::string& prefix);

}  // namespace mvksr
