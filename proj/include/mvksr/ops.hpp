// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops over Tensor. Layout is NCHW for all image-shaped ops.
#pragma once

#include <vector>

#include "mvksr/tensor.hpp"

namespace mvksr {

// --- network ops -----------------------------------------------------------

/// Zero-padded cross-correlation. `bias` may be undefined. Output spatial size
/// is H + 2*padding - dilation*(K-1).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int dilation = 1,
              int padding = 0);

/// Mean of each 2x2 block. H and W must be even.
Tensor downsample_avg2(const Tensor& input);

/// Replicates each pixel into a 2x2 block.
Tensor upsample_nearest2(const Tensor& input);

/// Per-sample normalization over (C, H, W) followed by a per-channel affine.
Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// x for x >= 0, slope[c] * x otherwise. Works on any rank >= 2 (channel axis 1).
Tensor prelu(const Tensor& input, const Tensor& slope);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& input, int begin, int count);

/// Keeps the top-left `height` x `width` window of every plane.
Tensor crop(const Tensor& input, int height, int width);

Tensor reshape(const Tensor& input, Shape shape);

// --- elementwise / reductions (used by the losses) -------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// a^p elementwise for a > 0.
Tensor pow_scalar(const Tensor& a, double p);
/// max(a, floor); gradient passes where a > floor.
Tensor clamp_min(const Tensor& a, double floor);
/// a / b elementwise.
Tensor div(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace mvksr
