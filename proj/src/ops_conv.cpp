// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "mvksr/error.hpp"
#include "mvksr/kernels/conv.hpp"
#include "mvksr/ops.hpp"

namespace mvksr {

namespace {

void require_nchw(const Tensor& t, const char* op) {
  require(t.defined() && t.rank() == 4,
          std::string(op) + ": expected an NCHW tensor, got " +
              (t.defined() ? to_string(t.shape()) : std::string("<undefined>")));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int dilation,
              int padding) {
  require_nchw(input, "conv2d");
  require(weight.defined() && weight.rank() == 4,
          "conv2d: weight must be OIKK, got " + to_string(weight.shape()));
  require(dilation >= 1, "conv2d: dilation must be positive");
  require(padding >= 0, "conv2d: padding must be non-negative");
  require(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square, got " +
                                               to_string(weight.shape()));
  require(weight.dim(2) % 2 == 1, "conv2d: kernel size must be odd, got " +
                                      std::to_string(weight.dim(2)));
  require(input.dim(1) == weight.dim(1),
          "conv2d: input channels " + std::to_string(input.dim(1)) +
              " != weight input channels " + std::to_string(weight.dim(1)));
  if (bias.defined())
    require(bias.numel() == static_cast<std::size_t>(weight.dim(0)),
            "conv2d: bias length " + std::to_string(bias.numel()) + " != output channels " +
                std::to_string(weight.dim(0)));

  kernels::ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.dilation = dilation;
  g.padding = padding;
  require(g.out_height() > 0 && g.out_width() > 0,
          "conv2d: empty output for input " + to_string(input.shape()));

  Shape out_shape{g.batch, g.out_channels, g.out_height(), g.out_width()};
  std::vector<double> out(numel(out_shape));
  const Precision precision = compute_precision();
  kernels::conv2d_forward(g, input.data().data(), weight.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out.data(), precision);

  return detail::make_result(
      std::move(out_shape), std::move(out), "conv2d", {input, weight, bias},
      [g, precision, in = input.node_ptr(), w = weight.node_ptr(),
       b = bias.defined() ? bias.node_ptr() : nullptr](detail::Node& self) {
        kernels::conv2d_backward(
            g, in->data.data(), w->data.data(), self.grad.data(),
            in->requires_grad ? in->ensure_grad().data() : nullptr,
            w->requires_grad ? w->ensure_grad().data() : nullptr,
            (b && b->requires_grad) ? b->ensure_grad().data() : nullptr, precision);
      });
}

Tensor downsample_avg2(const Tensor& input) {
  require_nchw(input, "downsample_avg2");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(h % 2 == 0 && w % 2 == 0,
          "downsample_avg2: H and W must be even, got " + to_string(input.shape()) +
              " (pad the image to a multiple of 4)");
  const int ho = h / 2, wo = w / 2;
  const int planes = n * c;
  std::vector<double> out(static_cast<std::size_t>(planes) * ho * wo);
  const double* src = input.data().data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* s = src + static_cast<std::size_t>(p) * h * w;
    double* d = out.data() + static_cast<std::size_t>(p) * ho * wo;
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        const double* r0 = s + (2 * y) * w + 2 * x;
        const double* r1 = r0 + w;
        d[y * wo + x] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  return detail::make_result(
      {n, c, ho, wo}, std::move(out), "downsample_avg2", {input},
      [planes, h, w, ho, wo, in = input.node_ptr()](detail::Node& self) {
        auto& gi = in->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int p = 0; p < planes; ++p) {
          const double* gs = self.grad.data() + static_cast<std::size_t>(p) * ho * wo;
          double* gd = gi.data() + static_cast<std::size_t>(p) * h * w;
          for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x) {
              const double v = 0.25 * gs[y * wo + x];
              double* r0 = gd + (2 * y) * w + 2 * x;
              r0[0] += v;
              r0[1] += v;
              r0[w] += v;
              r0[w + 1] += v;
            }
        }
      });
}

Tensor upsample_nearest2(const Tensor& input) {
  require_nchw(input, "upsample_nearest2");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int ho = 2 * h, wo = 2 * w;
  const int planes = n * c;
  std::vector<double> out(static_cast<std::size_t>(planes) * ho * wo);
  const double* src = input.data().data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const double* s = src + static_cast<std::size_t>(p) * h * w;
    double* d = out.data() + static_cast<std::size_t>(p) * ho * wo;
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) d[y * wo + x] = s[(y / 2) * w + x / 2];
  }
  return detail::make_result(
      {n, c, ho, wo}, std::move(out), "upsample_nearest2", {input},
      [planes, h, w, ho, wo, in = input.node_ptr()](detail::Node& self) {
        auto& gi = in->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int p = 0; p < planes; ++p) {
          const double* gs = self.grad.data() + static_cast<std::size_t>(p) * ho * wo;
          double* gd = gi.data() + static_cast<std::size_t>(p) * h * w;
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
              const double* r0 = gs + (2 * y) * wo + 2 * x;
              gd[y * w + x] += r0[0] + r0[1] + r0[wo] + r0[wo + 1];
            }
        }
      });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  for (const auto& t : parts) require_nchw(t, "concat_channels");
  const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int total = 0;
  for (const auto& t : parts) {
    require(t.dim(0) == n, "concat_channels: batch mismatch " + to_string(t.shape()) + " vs " +
                               to_string(parts[0].shape()));
    require(t.dim(2) == h && t.dim(3) == w, "concat_channels: spatial mismatch " +
                                                to_string(t.shape()) + " vs " +
                                                to_string(parts[0].shape()));
    total += t.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * total * plane);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& t : parts) {
    offsets.push_back(off);
    const int c = t.dim(1);
    for (int b = 0; b < n; ++b) {
      const double* s = t.data().data() + static_cast<std::size_t>(b) * c * plane;
      std::copy(s, s + c * plane, out.data() + (static_cast<std::size_t>(b) * total + off) * plane);
    }
    off += c;
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& t : parts) nodes.push_back(t.node_ptr());
  return detail::make_result(
      {n, total, h, w}, std::move(out), "concat_channels", parts,
      [n, total, plane, offsets, nodes](detail::Node& self) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          auto& in = *nodes[i];
          if (!in.requires_grad) continue;
          const int c = in.shape[1];
          auto& gi = in.ensure_grad();
          for (int b = 0; b < n; ++b) {
            const double* s = self.grad.data() + (static_cast<std::size_t>(b) * total + offsets[i]) * plane;
            double* d = gi.data() + static_cast<std::size_t>(b) * c * plane;
            for (std::size_t k = 0; k < c * plane; ++k) d[k] += s[k];
          }
        }
      });
}

Tensor slice_channels(const Tensor& input, int begin, int count) {
  require_nchw(input, "slice_channels");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(begin >= 0 && count > 0 && begin + count <= c,
          "slice_channels: range out of bounds for " + to_string(input.shape()));
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * count * plane);
  for (int b = 0; b < n; ++b) {
    const double* s = input.data().data() + (static_cast<std::size_t>(b) * c + begin) * plane;
    std::copy(s, s + count * plane, out.data() + static_cast<std::size_t>(b) * count * plane);
  }
  return detail::make_result(
      {n, count, h, w}, std::move(out), "slice_channels", {input},
      [n, c, begin, count, plane, in = input.node_ptr()](detail::Node& self) {
        auto& gi = in->ensure_grad();
        for (int b = 0; b < n; ++b) {
          const double* s = self.grad.data() + static_cast<std::size_t>(b) * count * plane;
          double* d = gi.data() + (static_cast<std::size_t>(b) * c + begin) * plane;
          for (std::size_t k = 0; k < count * plane; ++k) d[k] += s[k];
        }
      });
}

Tensor crop(const Tensor& input, int height, int width) {
  require_nchw(input, "crop");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(height > 0 && width > 0 && height <= h && width <= w,
          "crop: window larger than input " + to_string(input.shape()));
  const int planes = n * c;
  std::vector<double> out(static_cast<std::size_t>(planes) * height * width);
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < height; ++y) {
      const double* s = input.data().data() + (static_cast<std::size_t>(p) * h + y) * w;
      std::copy(s, s + width, out.data() + (static_cast<std::size_t>(p) * height + y) * width);
    }
  return detail::make_result(
      {n, c, height, width}, std::move(out), "crop", {input},
      [planes, h, w, height, width, in = input.node_ptr()](detail::Node& self) {
        auto& gi = in->ensure_grad();
        for (int p = 0; p < planes; ++p)
          for (int y = 0; y < height; ++y) {
            const double* s = self.grad.data() + (static_cast<std::size_t>(p) * height + y) * width;
            double* d = gi.data() + (static_cast<std::size_t>(p) * h + y) * w;
            for (int x = 0; x < width; ++x) d[x] += s[x];
          }
      });
}

Tensor reshape(const Tensor& input, Shape shape) {
  require(numel(shape) == input.numel(), "reshape: " + to_string(input.shape()) + " -> " +
                                             to_string(shape) + " changes element count");
  std::vector<double> data(input.data().begin(), input.data().end());
  return detail::make_result(std::move(shape), std::move(data), "reshape", {input},
                             [in = input.node_ptr()](detail::Node& self) {
                               auto& gi = in->ensure_grad();
                               for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += self.grad[k];
                             });
}

}  // namespace mvksr
