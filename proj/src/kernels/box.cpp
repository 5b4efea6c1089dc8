// SPDX-License-Identifier: Apache-2.0
#include "mvksr/kernels/box.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace mvksr::kernels {

void box_mean(const double* src, int height, int width, int radius, double* dst) {
  const std::size_t stride = static_cast<std::size_t>(width) + 1;
  // sat[(y+1)*stride + (x+1)] = sum of src[0..y][0..x]
  std::vector<double> sat(stride * (height + 1), 0.0);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const double* s = src + static_cast<std::size_t>(y) * width;
    double* row = sat.data() + (y + 1) * stride;
    double acc = 0.0;
    for (int x = 0; x < width; ++x) {
      acc += s[x];
      row[x + 1] = acc;
    }
  }
  // Column accumulation is a sequential dependency in y; vectorize across x.
  for (int y = 1; y < height; ++y) {
    const double* prev = sat.data() + y * stride;
    double* row = sat.data() + (y + 1) * stride;
    for (std::size_t x = 1; x < stride; ++x) row[x] += prev[x];
  }

#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const int y0 = std::max(0, y - radius);
    const int y1 = std::min(height - 1, y + radius);
    const double* top = sat.data() + static_cast<std::size_t>(y0) * stride;
    const double* bot = sat.data() + static_cast<std::size_t>(y1 + 1) * stride;
    const double rows = y1 - y0 + 1;
    double* d = dst + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(width - 1, x + radius);
      const double s = bot[x1 + 1] - bot[x0] - top[x1 + 1] + top[x0];
      d[x] = s / (rows * (x1 - x0 + 1));
    }
  }
}

namespace reference {

void box_mean(const double* src, int height, int width, int radius, double* dst) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      int count = 0;
      for (int yy = std::max(0, y - radius); yy <= std::min(height - 1, y + radius); ++yy)
        for (int xx = std::max(0, x - radius); xx <= std::min(width - 1, x + radius); ++xx) {
          acc += src[static_cast<std::size_t>(yy) * width + xx];
          ++count;
        }
      dst[static_cast<std::size_t>(y) * width + x] = acc / count;
    }
}

}  // namespace reference

}  // namespace mvksr::kernels
