// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "mvksr/error.hpp"
#include "mvksr/ops.hpp"

namespace mvksr {

Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& bias, double eps) {
  require(input.defined() && input.rank() == 4,
          "layer_norm: expected NCHW input, got " + to_string(input.shape()));
  require(eps > 0.0, "layer_norm: eps must be positive");
  const int n = input.dim(0), c = input.dim(1);
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  require(gain.numel() == static_cast<std::size_t>(c) && bias.numel() == static_cast<std::size_t>(c),
          "layer_norm: gain/bias must have one entry per channel (" + std::to_string(c) + ")");
  const std::size_t per_sample = c * plane;

  std::vector<double> out(input.numel());
  std::vector<double> xhat(input.numel());
  std::vector<double> inv_std(n);
  const double* x = input.data().data();
  const double* g = gain.data().data();
  const double* b = bias.data().data();

#pragma omp parallel for schedule(static)
  for (int s = 0; s < n; ++s) {
    const double* xs = x + s * per_sample;
    double mu = 0.0;
    for (std::size_t k = 0; k < per_sample; ++k) mu += xs[k];
    mu /= static_cast<double>(per_sample);
    double resid = 0.0;  // second pass removes rounding in the mean
    for (std::size_t k = 0; k < per_sample; ++k) resid += xs[k] - mu;
    mu += resid / static_cast<double>(per_sample);
    double var = 0.0;
    for (std::size_t k = 0; k < per_sample; ++k) var += (xs[k] - mu) * (xs[k] - mu);
    var /= static_cast<double>(per_sample);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[s] = is;
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t i = s * per_sample + ch * plane + k;
        xhat[i] = (x[i] - mu) * is;
        out[i] = g[ch] * xhat[i] + b[ch];
      }
  }

  return detail::make_result(
      input.shape(), std::move(out), "layer_norm", {input, gain, bias},
      [n, c, plane, per_sample, xhat = std::move(xhat), inv_std = std::move(inv_std),
       in = input.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr()](detail::Node& self) {
        const double* dy = self.grad.data();
        const double* g = gn->data.data();
        if (gn->requires_grad || bn->requires_grad) {
          auto& dg = gn->ensure_grad();
          auto& db = bn->ensure_grad();
          for (int s = 0; s < n; ++s)
            for (int ch = 0; ch < c; ++ch) {
              double ag = 0.0, ab = 0.0;
              for (std::size_t k = 0; k < plane; ++k) {
                const std::size_t i = s * per_sample + ch * plane + k;
                ag += dy[i] * xhat[i];
                ab += dy[i];
              }
              dg[ch] += ag;
              db[ch] += ab;
            }
        }
        if (!in->requires_grad) return;
        auto& dx = in->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int s = 0; s < n; ++s) {
          double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
          for (int ch = 0; ch < c; ++ch)
            for (std::size_t k = 0; k < plane; ++k) {
              const std::size_t i = s * per_sample + ch * plane + k;
              const double dxh = dy[i] * g[ch];
              m1 += dxh;
              m2 += dxh * xhat[i];
            }
          m1 /= static_cast<double>(per_sample);
          m2 /= static_cast<double>(per_sample);
          for (int ch = 0; ch < c; ++ch)
            for (std::size_t k = 0; k < plane; ++k) {
              const std::size_t i = s * per_sample + ch * plane + k;
              dx[i] += inv_std[s] * (dy[i] * g[ch] - m1 - xhat[i] * m2);
            }
        }
      });
}

Tensor prelu(const Tensor& input, const Tensor& slope) {
  require(input.defined() && input.rank() >= 2,
          "prelu: expected input with a channel axis, got " + to_string(input.shape()));
  const int n = input.dim(0), c = input.dim(1);
  require(slope.numel() == static_cast<std::size_t>(c),
          "prelu: slope must have one entry per channel (" + std::to_string(c) + "), got " +
              std::to_string(slope.numel()));
  const std::size_t plane = input.numel() / (static_cast<std::size_t>(n) * c);
  const double* x = input.data().data();
  const double* a = slope.data().data();
  std::vector<double> out(input.numel());
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = x[base + k];
        out[base + k] = v >= 0.0 ? v : a[ch] * v;
      }
    }
  return detail::make_result(
      input.shape(), std::move(out), "prelu", {input, slope},
      [n, c, plane, in = input.node_ptr(), sl = slope.node_ptr()](detail::Node& self) {
        const double* dy = self.grad.data();
        const double* x = in->data.data();
        const double* a = sl->data.data();
        double* dx = in->requires_grad ? in->ensure_grad().data() : nullptr;
        double* da = sl->requires_grad ? sl->ensure_grad().data() : nullptr;
        for (int s = 0; s < n; ++s)
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * plane;
            double acc = 0.0;
            for (std::size_t k = 0; k < plane; ++k) {
              const double v = x[base + k];
              if (v >= 0.0) {
                if (dx) dx[base + k] += dy[base + k];
              } else {
                if (dx) dx[base + k] += a[ch] * dy[base + k];
                acc += v * dy[base + k];
              }
            }
            if (da) da[ch] += acc;
          }
      });
}

}  // namespace mvksr
