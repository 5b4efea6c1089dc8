// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: cross supervision of the view heads, MS-SSIM, and the
// contrastive regularizer over a frozen feature pyramid.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvksr/freq.hpp"
#include "mvksr/image.hpp"
#include "mvksr/net.hpp"
#include "mvksr/params.hpp"

namespace mvksr {

struct LossWeights {
  double lambda1 = 0.8;    // MS-SSIM
  double lambda2 = 0.2;    // contrastive regularization
  double lambda_cs = 1.0;  // cross supervision
};

/// Clean-image grayscale and its middle-scale frequency layers, N1HW.
struct SupervisionTargets {
  Tensor gray;
  Tensor high;
  Tensor low;
};

inline constexpr int kTargetScale = 13;

SupervisionTargets make_targets(const std::vector<Image>& clean, const NetworkConfig& config,
                                int k = kTargetScale);

struct CrossSupervisionOptions {
  bool supervise_high = true;
  bool supervise_low = true;
  bool self_supervise = true;
};

/// Individual terms; disabled terms are left undefined.
struct CsTerms {
  Tensor gray;  // MSE
  Tensor high;  // MAE
  Tensor low;   // MSE
  Tensor self;  // MSE of gray - (high + low)
};

Tensor cross_supervision_loss(const MffOutputs& out, const SupervisionTargets& tgt,
                              const CrossSupervisionOptions& options = {},
                              CsTerms* terms = nullptr);

struct MsSsimConfig {
  std::vector<double> alphas{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  double floor = 1e-6;  // per-scale SSIM is clamped here before the power
};

/// Normalized window, row-major window x window.
std::vector<double> gaussian_window(int size, double sigma);

/// Mean of the valid-region SSIM map over every channel and batch item.
Tensor ssim(const Tensor& x, const Tensor& y, const MsSsimConfig& config = {});
/// Number of scales usable for an h x w image (at least 1).
int ms_ssim_scales(int height, int width, const MsSsimConfig& config = {});
/// 1 - prod_i ssim_i^alpha_i with alphas renormalized over the usable scales.
Tensor ms_ssim_loss(const Tensor& restored, const Tensor& gt, const MsSsimConfig& config = {});

struct CrConfig {
  std::array<double, 5> omega{1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
  std::array<int, 5> widths{8, 16, 32, 64, 64};
  double floor = 1e-6;
  std::uint64_t seed = 19;
  std::string weights_path;  // empty = seeded random extractor
};

/// Frozen five-stage extractor: [conv3x3, prelu, conv3x3, prelu, avg-down] per stage.
class FeaturePyramid {
 public:
  explicit FeaturePyramid(const CrConfig& config);
  /// Uses tensors named "fp.s<i>.c<j>.{w,b}" and "fp.s<i>.act<j>" from `weights`.
  FeaturePyramid(const CrConfig& config, ParamSet weights);

  std::vector<Tensor> features(const Tensor& img) const;
  const ParamSet& weights() const { return weights_; }

 private:
  void validate();
  CrConfig config_;
  ParamSet weights_;
};

ParamSet feature_pyramid_weights(const CrConfig& config);

Tensor cr_loss(const Tensor& restored, const Tensor& gt, const Tensor& degraded,
               const FeaturePyramid& extractor, const CrConfig& config);

struct LossConfig {
  LossWeights weights;
  MsSsimConfig msssim;
  CrConfig cr;
  CrossSupervisionOptions cs;
};

/// Unweighted term values alongside the weighted total.
struct LossBreakdown {
  double total = 0.0;
  double msssim = 0.0;
  double cr = 0.0;
  double cs = 0.0;
  double cs_gray = 0.0;
  double cs_high = 0.0;
  double cs_low = 0.0;
  double cs_self = 0.0;
  bool has_cs_high = false;
  bool has_cs_low = false;
  bool has_cs_self = false;
};

struct TotalLoss {
  Tensor total;
  LossBreakdown breakdown;
};

/// Terms with zero weight are not evaluated.
TotalLoss total_loss(const MffOutputs& out, const Tensor& gt, const Tensor& degraded,
                     const SupervisionTargets& targets, const LossConfig& config,
                     const FeaturePyramid& extractor);

}  // namespace mvksr
