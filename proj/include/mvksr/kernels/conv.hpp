// SPDX-License-Identifier: Apache-2.0
//
// Raw 2-D convolution kernels (NCHW input, OIKK weights, zero padding,
// cross-correlation). The parallel versions lower to im2col + GEMM; the
// `reference` namespace holds the serial nested-loop versions kept as test
// oracles and benchmark baselines.
#pragma once

#include "mvksr/tensor.hpp"

namespace mvksr::kernels {

struct ConvGeometry {
  int batch = 0;
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int out_channels = 0;
  int kernel = 0;
  int dilation = 1;
  int padding = 0;

  int out_height() const { return height + 2 * padding - dilation * (kernel - 1); }
  int out_width() const { return width + 2 * padding - dilation * (kernel - 1); }
};

/// `bias` may be null.
void conv2d_forward(const ConvGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output, Precision precision);

/// Accumulates (+=) into whichever of grad_input / grad_weight / grad_bias is
/// non-null.
void conv2d_backward(const ConvGeometry& g, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias, Precision precision);

namespace reference {

void conv2d_forward(const ConvGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output);

void conv2d_backward(const ConvGeometry& g, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias);

}  // namespace reference

}  // namespace mvksr::kernels
