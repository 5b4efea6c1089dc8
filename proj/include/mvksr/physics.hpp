// SPDX-License-Identifier: Apache-2.0
//
// Degradation synthesis: atmospheric scattering haze, additive rain streaks,
// and their composition, plus procedural depth and streak generators.
#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "mvksr/image.hpp"

namespace mvksr {

/// Global airlight A (per channel, each in [0,1]) and scattering coefficient.
struct HazeParams {
  std::array<double, 3> atmospheric_light{1.0, 1.0, 1.0};
  double beta = 1.0;

  void validate() const;
};

struct DepthMap {
  Image map;  // 1 channel, finite, >= 0
};

struct TransmissionMap {
  Image map;  // 1 channel, values in (0, 1]
};

struct RainField {
  Image map;  // 1 channel, values in [0, 1]
};

enum class DepthMode { kConstant, kRamp, kSmoothNoise };

struct DepthGenParams {
  DepthMode mode = DepthMode::kRamp;
  double d_min = 0.0;
  double d_max = 1.0;
  std::uint64_t seed = 0;
};

struct RainGenParams {
  double angle_deg = 0.0;       // [-30, 30], 0 = vertical
  double streak_length = 20.0;  // pixels, [8, 40]
  double density = 2.0;         // streaks per kilopixel, [0, 8]
  double intensity = 0.5;       // peak value, (0, 0.8]
  std::uint64_t seed = 0;

  void validate() const;
};

enum class DegradationKind { kHaze, kRain, kMixed };

std::string to_string(DegradationKind kind);
DegradationKind parse_degradation_kind(const std::string& s);
std::string to_string(DepthMode mode);
DepthMode parse_depth_mode(const std::string& s);

/// Everything needed to regenerate a degraded image from its clean source.
struct DegradationSpec {
  HazeParams haze;
  DepthGenParams depth;
  RainGenParams rain;
};

TransmissionMap transmission_map(const DepthMap& depth, double beta);

/// I = J*t + A*(1-t), per channel.
Image synth_haze(const Image& clear, const TransmissionMap& t, const HazeParams& haze);
/// I = clamp(J + S, 0, 1); S broadcast over channels.
Image synth_rain(const Image& clear, const RainField& rain);
/// I = clamp((J + S)*t + A*(1-t), 0, 1).
Image synth_mixed(const Image& clear, const RainField& rain, const TransmissionMap& t,
                  const HazeParams& haze);

/// constant: d_min everywhere. ramp: d_max on the top row falling linearly to
/// d_min on the bottom row. smooth-noise: blurred seeded noise rescaled to
/// exactly [d_min, d_max].
DepthMap gen_depth(const DepthGenParams& params, int height, int width);

/// ceil(density*h*w/1000) anti-aliased streaks with a triangular brightness
/// profile peaking at `intensity`.
RainField gen_rain_streaks(const RainGenParams& params, int height, int width);

/// Regenerates depth/rain from the spec and applies the requested model.
Image degrade(const Image& clear, DegradationKind kind, const DegradationSpec& spec);

/// Ranges used when sampling specs for synthetic corpora.
struct DegradationSampler {
  double atm_min = 0.7;
  double atm_max = 1.0;
  bool per_channel_atm = false;
  double beta_min = 0.6;
  double beta_max = 2.0;
  double fixed_beta = -1.0;  // >= 0 overrides sampling
  double fixed_atm = -1.0;   // >= 0 overrides sampling
  double depth_min = 0.2;
  double depth_max = 1.2;
  double rain_density_min = 2.0;
  double rain_density_max = 6.0;
  double rain_length_min = 10.0;
  double rain_length_max = 30.0;
  double rain_intensity_min = 0.3;
  double rain_intensity_max = 0.7;
  double rain_angle_max = 20.0;
};

DegradationSpec sample_degradation(const DegradationSampler& sampler, std::uint64_t seed);

}  // namespace mvksr
