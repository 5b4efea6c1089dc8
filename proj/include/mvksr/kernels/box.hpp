// SPDX-License-Identifier: Apache-2.0
//
// Box-window means over single-channel row-major planes. Windows are
// (2r+1)^2 squares truncated at the image border, and the mean divides by the
// number of pixels actually covered.
#pragma once

namespace mvksr::kernels {

/// O(1) per pixel via a summed-area table; rows are processed in parallel.
void box_mean(const double* src, int height, int width, int radius, double* dst);

namespace reference {

/// Explicit window loop, O(r^2) per pixel.
void box_mean(const double* src, int height, int width, int radius, double* dst);

}  // namespace reference

}  // namespace mvksr::kernels
