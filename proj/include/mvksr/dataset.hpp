// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpora: procedural clean scenes, degraded copies and the
// manifest that records how each copy was made.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvksr/image.hpp"
#include "mvksr/physics.hpp"

namespace mvksr {

/// Sky/ground layout with textured shapes; deterministic per seed.
Image procedural_scene(int height, int width, std::uint64_t seed);

/// Writes `count` scenes as scene_NNNN.png into `dir`.
std::vector<std::filesystem::path> write_procedural_scenes(const std::filesystem::path& dir,
                                                           int count, int height, int width,
                                                           std::uint64_t seed);

inline constexpr int kManifestVersion = 1;

struct ManifestRecord {
  std::size_t index = 0;
  DegradationKind kind = DegradationKind::kHaze;
  std::filesystem::path clean_path;     // absolute once loaded
  std::filesystem::path degraded_path;  // absolute once loaded
  DegradationSpec spec;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  std::vector<ManifestRecord> records;
};

/// Paths under `base` are written relative to it.
std::string serialize_manifest(const DatasetManifest& manifest, const std::filesystem::path& base);
/// Relative paths resolve against `base`.
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base,
                               const std::string& origin = "<manifest>");
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

enum class KindAssignment {
  kEach,   // every clean image yields one record per kind
  kCycle,  // clean image i gets kinds[i % kinds.size()]
};

struct DatasetConfig {
  std::vector<DegradationKind> kinds{DegradationKind::kHaze, DegradationKind::kRain,
                                     DegradationKind::kMixed};
  KindAssignment assignment = KindAssignment::kEach;
  DegradationSampler sampler;
  std::uint64_t seed = 1;
};

/// Degrades every decodable PNG in `clean_dir` (sorted by name) into
/// `out_dir`/degraded and writes `out_dir`/manifest.txt.
DatasetManifest build_dataset(const std::filesystem::path& clean_dir, const DatasetConfig& config,
                              const std::filesystem::path& out_dir);

/// Deterministic 80/20 split by index hash; exactly round(n/5) records are
/// held out (at least one when n >= 2).
std::vector<bool> held_out_mask(std::size_t count);
std::vector<std::size_t> split_indices(std::size_t count, bool held_out);

/// Regenerates the degraded image of `record` from its clean source,
/// quantized as it would be on disk.
Image replay_record(const ManifestRecord& record);

}  // namespace mvksr
