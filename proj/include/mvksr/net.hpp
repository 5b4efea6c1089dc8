// SPDX-License-Identifier: Apache-2.0
//
// The restoration network: mixed convolution layers (MCL), mixed residual
// blocks (MRB), the coarse-extraction en-decoder (MCE) and the fine-fusion
// head (MFF).
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvksr/freq.hpp"
#include "mvksr/image.hpp"
#include "mvksr/params.hpp"
#include "mvksr/tensor.hpp"

namespace mvksr {

struct NetworkConfig {
  int in_channels = 9;  // RGB + 3 high + 3 low
  std::array<int, 3> level_channels{16, 32, 64};
  std::array<int, 3> level_rates{12, 6, 3};
  int kernel = 3;
  int mff_channels = 16;
  int bf_rate = 3;
  int bottleneck_blocks = 3;  // extra MRBs at the coarsest level

  // Front end: how the 9 view channels are produced.
  GrayCoeffs gray_coeffs = GrayCoeffs::kReduced;
  DecomposeParams decompose{};
  bool use_high_input = true;  // false zeroes the high-frequency channels
  bool use_low_input = true;

  std::uint64_t seed = 1;

  void validate() const;
};

/// Sigmoid-bounded heads; in additive mode the high head is
/// 2*sigmoid-1 so that it can match signed detail layers.
struct MffOutputs {
  Tensor gray;      // N1HW
  Tensor high;      // N1HW
  Tensor low;       // N1HW
  Tensor restored;  // N3HW
};

struct MceOutputs {
  Tensor features;            // N x C0 x H x W
  std::vector<Tensor> skips;  // encoder outputs at full and half resolution
};

ParamSet init_params(const NetworkConfig& config);

/// View channels [R,G,B, high(k), low(k)] for every k in kFreqScales.
/// Images must be RGB and share a size.
Tensor assemble_views(const std::vector<Image>& degraded, const NetworkConfig& config);

Tensor mcl_forward(const ParamSet& params, const std::string& prefix, const Tensor& x, int rate);
Tensor mrb_forward(const ParamSet& params, const std::string& prefix, const Tensor& x, int rate);
MceOutputs mce_forward(const ParamSet& params, const NetworkConfig& config, const Tensor& views);
MffOutputs mff_forward(const ParamSet& params, const NetworkConfig& config,
                       const Tensor& features, const Tensor& views);

/// Views -> MCE -> MFF. H and W must be multiples of 4.
MffOutputs mvksr_forward_views(const ParamSet& params, const NetworkConfig& config,
                               const Tensor& views);
/// Full pipeline from degraded RGB images (already padded to multiples of 4).
MffOutputs mvksr_forward(const ParamSet& params, const NetworkConfig& config,
                         const std::vector<Image>& degraded);

/// Registers MCL / MRB parameters under `prefix` (used by init_params and by
/// tests that exercise single blocks).
void add_mcl_params(ParamSet& params, const std::string& prefix, int c_in, int c_out, int kernel,
                    std::uint64_t seed);
void add_mrb_params(ParamSet& params, const std::string& prefix, int channels, int kernel,
                    std::uint64_t seed);

/// Kaiming-style uniform conv init, bound = gain*sqrt(3/fan_in) with the
/// PReLU(0.25) gain; deterministic per (seed, name).
Tensor init_conv_weight(const std::string& name, int c_out, int c_in, int kernel,
                        std::uint64_t seed);

}  // namespace mvksr
