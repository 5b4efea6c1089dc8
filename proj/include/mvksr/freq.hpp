// SPDX-License-Identifier: Apache-2.0
//
// Grayscale conversion and self-guided multi-scale frequency decomposition.
#pragma once

#include <array>
#include <string>

#include "mvksr/image.hpp"

namespace mvksr {

enum class GrayCoeffs {
  kReduced,   // (0.229, 0.587, 0.114), sums to 0.93
  kStandard,  // (0.299, 0.587, 0.114)
};

std::array<double, 3> gray_coefficients(GrayCoeffs coeffs);
/// rgb must have 3 channels; returns a 1-channel image.
Image to_grayscale(const Image& rgb, GrayCoeffs coeffs = GrayCoeffs::kReduced);

struct GuidedFilterParams {
  int radius = 5;      // window is (2*radius+1)^2, truncated at borders
  double eps = 0.1;
  int subsample = 1;   // 1 = exact, 2 or 4 = fast variant

  void validate() const;
};

/// Exact guided filter over 1-channel p and guide of equal size. A subsample
/// factor > 1 in params is ignored here; see fast_guided_filter.
Image guided_filter(const Image& p, const Image& guide, const GuidedFilterParams& params);

/// Brute-force windowed computation of the same quantity; O(r^2) per pixel.
Image guided_filter_reference(const Image& p, const Image& guide,
                              const GuidedFilterParams& params);

/// Coefficients on a block-averaged copy (factor s, radius ceil(r/s)), then
/// bilinear upsampling of mean(a), mean(b). s == 1 is exactly guided_filter.
Image fast_guided_filter(const Image& p, const Image& guide, const GuidedFilterParams& params);

enum class FreqMode {
  kComplement,  // high = 1 - low
  kAdditive,    // high = gray - low
};

enum class KernelInterp {
  kRadius,    // k is the window radius
  kDiameter,  // radius = (k-1)/2
};

std::string to_string(FreqMode mode);
FreqMode parse_freq_mode(const std::string& s);
std::string to_string(KernelInterp interp);
KernelInterp parse_kernel_interp(const std::string& s);

inline constexpr std::array<int, 3> kFreqScales{5, 13, 25};

struct DecomposeParams {
  double eps = 0.1;
  FreqMode mode = FreqMode::kAdditive;
  KernelInterp interp = KernelInterp::kRadius;
  int subsample = 1;

  int radius_for(int k) const;
};

struct FreqLayer {
  Image low;
  Image high;  // signed in additive mode
};

struct FreqStack {
  std::array<Image, 3> lows;   // ordered as kFreqScales
  std::array<Image, 3> highs;
  FreqMode mode = FreqMode::kAdditive;
};

FreqLayer decompose_scale(const Image& gray, int k, const DecomposeParams& params);
FreqStack decompose_multiscale(const Image& gray, const DecomposeParams& params);

/// Maps a high layer into [0,1] for PNG storage (additive: h*0.5+0.5; complement:
/// unchanged) and back.
Image encode_high(const Image& high, FreqMode mode);
Image decode_high(const Image& stored, FreqMode mode);

/// Sum of absolute horizontal and vertical neighbour differences.
double total_variation(const Image& plane);

}  // namespace mvksr
