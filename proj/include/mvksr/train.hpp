// SPDX-License-Identifier: Apache-2.0
//
// Training loop, model persistence and the restore/evaluate flows.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mvksr/dataset.hpp"
#include "mvksr/losses.hpp"
#include "mvksr/metrics.hpp"
#include "mvksr/net.hpp"
#include "mvksr/params.hpp"

namespace mvksr {

/// base_lr * decay^floor(epoch / decay_every).
double lr_schedule(int epoch, double base_lr = 1e-3, int decay_every = 30, double decay = 0.1);

struct TrainConfig {
  int patch_size = 64;
  int batch_size = 4;
  int epochs = 90;
  double base_lr = 1e-3;
  int lr_decay_every = 30;
  double lr_decay = 0.1;
  std::uint64_t seed = 1;
  bool flips = true;
  bool train_split_only = true;  // skip the held-out 20%
  int checkpoint_every = 10;
  Precision precision = Precision::kFloat32;
  /// Share of each epoch's samples per kind, indexed haze, rain, mixed.
  /// Kinds absent from the data are dropped and the rest renormalized.
  std::array<double, 3> mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  NetworkConfig net;
  LossConfig loss;

  void validate() const;
};

/// Splits `total` samples across kinds in proportion to `mix` (largest
/// remainder, ties to the lower kind). Kinds with `available[k] == 0` get none.
std::array<std::size_t, 3> mix_quotas(const std::array<double, 3>& mix,
                                      const std::array<std::size_t, 3>& available,
                                      std::size_t total);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;  // sample-weighted means over the epoch
};

/// `epoch=<e> lr=<lr> loss=<x> msssim=<a> cr=<b> cs=<c>`
std::string format_log_line(const EpochStats& stats);

struct TrainOptions {
  std::filesystem::path checkpoint;  // empty: nothing is written
  /// Continue from `<checkpoint>.state` when it exists.
  bool resume = false;
  std::function<void(const std::string&)> on_log;
};

struct TrainResult {
  ParamSet params;
  std::vector<EpochStats> epochs;  // only the epochs run by this call
};

/// Writes `<checkpoint>` (32-bit model + meta.*) and `<checkpoint>.state`
/// (exact 64-bit weights and optimizer moments) every checkpoint_every epochs
/// and at the end. A non-finite loss raises kNumerical naming the first
/// non-finite tensor.
TrainResult train_loop(const DatasetManifest& manifest, const TrainConfig& config,
                       const TrainOptions& options = {});

/// Model tensors plus meta.* records describing `net`.
ParamSet model_archive(const ParamSet& params, const NetworkConfig& net, int epoch);

struct LoadedModel {
  ParamSet params;
  NetworkConfig net;
  int epoch = 0;
};

/// Reads a checkpoint; the network layout comes from its meta.* records.
LoadedModel load_model(const std::filesystem::path& checkpoint);
LoadedModel model_from_archive(ParamSet archive, const std::string& origin);

struct RestoreTiming {
  double decompose_s = 0.0;
  double inference_s = 0.0;
};

/// Pads to a multiple of 4 (reflect), runs the network without gradients and
/// crops back. `fast` switches the decomposition to the subsampled filter.
Image restore_image(const LoadedModel& model, const Image& degraded, bool fast = false,
                    RestoreTiming* timing = nullptr);

struct KindEvaluation {
  MetricReport restored;  // restored vs clean
  MetricReport baseline;  // degraded vs clean
};

struct DatasetEvaluation {
  std::map<DegradationKind, KindEvaluation> kinds;
};

/// Restores the selected records (all when `indices` is empty).
DatasetEvaluation evaluate_dataset(const LoadedModel& model, const DatasetManifest& manifest,
                                   const std::vector<std::size_t>& indices = {},
                                   bool fast = false);

/// `<kind>.restored.psnr.<image>=...` style records for every kind.
void write_evaluation_records(std::ostream& os, const DatasetEvaluation& eval);
void write_evaluation_table(std::ostream& os, const DatasetEvaluation& eval);

}  // namespace mvksr
