// SPDX-License-Identifier: Apache-2.0
#include "mvksr/kernels/conv.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <vector>

namespace mvksr::kernels {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Column buffer layout: rows = (c, ki, kj), cols = (n, oy, ox). Batch items
// share one GEMM so small spatial sizes still feed the BLAS kernel well.
template <class T>
void im2col(const ConvGeometry& g, const double* input, T* col) {
  const int ho = g.out_height(), wo = g.out_width();
  const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
  const std::size_t cols = plane_out * g.batch;
  const std::size_t plane_in = static_cast<std::size_t>(g.height) * g.width;
  const int kk = g.kernel * g.kernel;

#pragma omp parallel for schedule(static)
  for (int row = 0; row < g.in_channels * kk; ++row) {
    const int c = row / kk;
    const int ki = (row % kk) / g.kernel;
    const int kj = row % g.kernel;
    const int dy = ki * g.dilation - g.padding;
    const int dx = kj * g.dilation - g.padding;
    // Valid output x range for this tap: 0 <= ox + dx < width.
    const int x_lo = std::clamp(-dx, 0, wo);
    const int x_hi = std::clamp(g.width - dx, x_lo, wo);
    T* dst_row = col + static_cast<std::size_t>(row) * cols;
    for (int n = 0; n < g.batch; ++n) {
      const double* src = input + (static_cast<std::size_t>(n) * g.in_channels + c) * plane_in;
      T* dst = dst_row + n * plane_out;
      for (int oy = 0; oy < ho; ++oy) {
        T* d = dst + static_cast<std::size_t>(oy) * wo;
        const int iy = oy + dy;
        if (iy < 0 || iy >= g.height) {
          std::fill(d, d + wo, T(0));
          continue;
        }
        const double* s = src + static_cast<std::size_t>(iy) * g.width;
        std::fill(d, d + x_lo, T(0));
        for (int ox = x_lo; ox < x_hi; ++ox) d[ox] = static_cast<T>(s[ox + dx]);
        std::fill(d + x_hi, d + wo, T(0));
      }
    }
  }
}

// Inverse scatter of im2col. Rows of one input channel only touch that
// channel, so parallelizing over channels keeps the summation order fixed.
template <class T>
void col2im_add(const ConvGeometry& g, const T* col, double* grad_input) {
  const int ho = g.out_height(), wo = g.out_width();
  const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
  const std::size_t cols = plane_out * g.batch;
  const std::size_t plane_in = static_cast<std::size_t>(g.height) * g.width;
  const int kk = g.kernel * g.kernel;

#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_channels; ++c) {
    for (int tap = 0; tap < kk; ++tap) {
      const int row = c * kk + tap;
      const int ki = tap / g.kernel;
      const int kj = tap % g.kernel;
      const int dy = ki * g.dilation - g.padding;
      const int dx = kj * g.dilation - g.padding;
      const int x_lo = std::clamp(-dx, 0, wo);
      const int x_hi = std::clamp(g.width - dx, x_lo, wo);
      const T* src_row = col + static_cast<std::size_t>(row) * cols;
      for (int n = 0; n < g.batch; ++n) {
        double* dst = grad_input + (static_cast<std::size_t>(n) * g.in_channels + c) * plane_in;
        const T* s = src_row + n * plane_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy + dy;
          if (iy < 0 || iy >= g.height) continue;
          double* d = dst + static_cast<std::size_t>(iy) * g.width;
          const T* sr = s + static_cast<std::size_t>(oy) * wo;
          for (int ox = x_lo; ox < x_hi; ++ox) d[ox + dx] += static_cast<double>(sr[ox]);
        }
      }
    }
  }
}

// Column-buffer budget (elements) above which the forward pass is tiled over
// output rows of one batch item at a time.
constexpr std::size_t kForwardColBudget = std::size_t{1} << 24;

// im2col restricted to batch item n and output rows [oy0, oy1).
template <class T>
void im2col_rows(const ConvGeometry& g, const double* input, int n, int oy0, int oy1, T* col) {
  const std::size_t plane_in = static_cast<std::size_t>(g.height) * g.width;
  const int wo = g.out_width();
  const std::size_t cols = static_cast<std::size_t>(oy1 - oy0) * wo;
  const int kk = g.kernel * g.kernel;
  const double* src = input + static_cast<std::size_t>(n) * g.in_channels * plane_in;

#pragma omp parallel for schedule(static)
  for (int row = 0; row < g.in_channels * kk; ++row) {
    const int c = row / kk;
    const int ki = (row % kk) / g.kernel;
    const int kj = row % g.kernel;
    const int dy = ki * g.dilation - g.padding;
    const int dx = kj * g.dilation - g.padding;
    const int x_lo = std::clamp(-dx, 0, wo);
    const int x_hi = std::clamp(g.width - dx, x_lo, wo);
    const double* plane = src + c * plane_in;
    T* dst = col + static_cast<std::size_t>(row) * cols;
    for (int oy = oy0; oy < oy1; ++oy) {
      T* d = dst + static_cast<std::size_t>(oy - oy0) * wo;
      const int iy = oy + dy;
      if (iy < 0 || iy >= g.height) {
        std::fill(d, d + wo, T(0));
        continue;
      }
      const double* s = plane + static_cast<std::size_t>(iy) * g.width;
      std::fill(d, d + x_lo, T(0));
      for (int ox = x_lo; ox < x_hi; ++ox) d[ox] = static_cast<T>(s[ox + dx]);
      std::fill(d + x_hi, d + wo, T(0));
    }
  }
}

template <class T>
void forward_impl(const ConvGeometry& g, const double* input, const double* weight,
                  const double* bias, double* output) {
  const int ho = g.out_height(), wo = g.out_width();
  const Eigen::Index plane = static_cast<Eigen::Index>(ho) * wo;
  const Eigen::Index cols = plane * g.batch;
  const Eigen::Index depth = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;
  RowMat<T> w = Eigen::Map<const RowMat<double>>(weight, g.out_channels, depth).template cast<T>();

  if (static_cast<std::size_t>(depth * cols) > kForwardColBudget) {
    const int rows_per_tile = std::max<int>(
        1, static_cast<int>(kForwardColBudget / static_cast<std::size_t>(depth * wo)));
    std::vector<T> col(static_cast<std::size_t>(depth) * std::min(rows_per_tile, ho) * wo);
    RowMat<T> out(g.out_channels, static_cast<Eigen::Index>(std::min(rows_per_tile, ho)) * wo);
    for (int n = 0; n < g.batch; ++n)
      for (int oy0 = 0; oy0 < ho; oy0 += rows_per_tile) {
        const int oy1 = std::min(ho, oy0 + rows_per_tile);
        const Eigen::Index tcols = static_cast<Eigen::Index>(oy1 - oy0) * wo;
        im2col_rows(g, input, n, oy0, oy1, col.data());
        auto o = out.leftCols(tcols);
        o.noalias() = w * Eigen::Map<const RowMat<T>>(col.data(), depth, tcols);
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < g.out_channels; ++oc) {
          const double b = bias ? bias[oc] : 0.0;
          double* dst = output + (static_cast<std::size_t>(n) * g.out_channels + oc) * plane +
                        static_cast<std::size_t>(oy0) * wo;
          for (Eigen::Index p = 0; p < tcols; ++p) dst[p] = static_cast<double>(o(oc, p)) + b;
        }
      }
    return;
  }

  std::vector<T> col(static_cast<std::size_t>(depth * cols));
  im2col(g, input, col.data());
  RowMat<T> out(g.out_channels, cols);
  out.noalias() = w * Eigen::Map<const RowMat<T>>(col.data(), depth, cols);

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      const double b = bias ? bias[o] : 0.0;
      const T* src = out.data() + o * cols + n * plane;
      double* dst = output + (static_cast<std::size_t>(n) * g.out_channels + o) * plane;
      for (Eigen::Index p = 0; p < plane; ++p) dst[p] = static_cast<double>(src[p]) + b;
    }
  }
}

template <class T>
void backward_impl(const ConvGeometry& g, const double* input, const double* weight,
                   const double* grad_output, double* grad_input, double* grad_weight,
                   double* grad_bias) {
  const int ho = g.out_height(), wo = g.out_width();
  const Eigen::Index plane = static_cast<Eigen::Index>(ho) * wo;
  const Eigen::Index cols = plane * g.batch;
  const Eigen::Index depth = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;

  RowMat<T> dout(g.out_channels, cols);
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      const double* src = grad_output + (static_cast<std::size_t>(n) * g.out_channels + o) * plane;
      T* dst = dout.data() + o * cols + n * plane;
      for (Eigen::Index p = 0; p < plane; ++p) dst[p] = static_cast<T>(src[p]);
    }
  }

  if (grad_bias) {
    for (int o = 0; o < g.out_channels; ++o) {
      // Summed in double in a fixed order regardless of thread count.
      const double* base = grad_output;
      double acc = 0.0;
      for (int n = 0; n < g.batch; ++n) {
        const double* src = base + (static_cast<std::size_t>(n) * g.out_channels + o) * plane;
        for (Eigen::Index p = 0; p < plane; ++p) acc += src[p];
      }
      grad_bias[o] += acc;
    }
  }

  if (grad_weight) {
    std::vector<T> col(static_cast<std::size_t>(depth * cols));
    im2col(g, input, col.data());
    RowMat<T> dw(g.out_channels, depth);
    dw.noalias() = dout * Eigen::Map<const RowMat<T>>(col.data(), depth, cols).transpose();
    Eigen::Map<RowMat<double>>(grad_weight, g.out_channels, depth) += dw.template cast<double>();
  }

  if (grad_input) {
    RowMat<T> w = Eigen::Map<const RowMat<double>>(weight, g.out_channels, depth).template cast<T>();
    RowMat<T> dcol(depth, cols);
    dcol.noalias() = w.transpose() * dout;
    col2im_add(g, dcol.data(), grad_input);
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output, Precision precision) {
  if (precision == Precision::kFloat32)
    forward_impl<float>(g, input, weight, bias, output);
  else
    forward_impl<double>(g, input, weight, bias, output);
}

void conv2d_backward(const ConvGeometry& g, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias, Precision precision) {
  if (precision == Precision::kFloat32)
    backward_impl<float>(g, input, weight, grad_output, grad_input, grad_weight, grad_bias);
  else
    backward_impl<double>(g, input, weight, grad_output, grad_input, grad_weight, grad_bias);
}

namespace reference {

void conv2d_forward(const ConvGeometry& g, const double* input, const double* weight,
                    const double* bias, double* output) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
          double acc = bias ? bias[o] : 0.0;
          for (int c = 0; c < g.in_channels; ++c)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int iy = y - g.padding + ki * g.dilation;
                const int ix = x - g.padding + kj * g.dilation;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += input[((n * g.in_channels + c) * g.height + iy) * g.width + ix] *
                       weight[((o * g.in_channels + c) * g.kernel + ki) * g.kernel + kj];
              }
          output[((n * g.out_channels + o) * ho + y) * wo + x] = acc;
        }
}

void conv2d_backward(const ConvGeometry& g, const double* input, const double* weight,
                     const double* grad_output, double* grad_input, double* grad_weight,
                     double* grad_bias) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
          const double go = grad_output[((n * g.out_channels + o) * ho + y) * wo + x];
          if (grad_bias) grad_bias[o] += go;
          for (int c = 0; c < g.in_channels; ++c)
            for (int ki = 0; ki < g.kernel; ++ki)
              for (int kj = 0; kj < g.kernel; ++kj) {
                const int iy = y - g.padding + ki * g.dilation;
                const int ix = x - g.padding + kj * g.dilation;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                const std::size_t ii = ((n * g.in_channels + c) * g.height + iy) * g.width + ix;
                const std::size_t wi = ((o * g.in_channels + c) * g.kernel + ki) * g.kernel + kj;
                if (grad_input) grad_input[ii] += go * weight[wi];
                if (grad_weight) grad_weight[wi] += go * input[ii];
              }
        }
}

}  // namespace reference

}  // namespace mvksr::kernels
