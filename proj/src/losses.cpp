// SPDX-License-Identifier: Apache-2.0
#include "mvksr/losses.hpp"

#include <cmath>
#include <numeric>

#include "mvksr/checkpoint.hpp"
#include "mvksr/error.hpp"
#include "mvksr/ops.hpp"

namespace mvksr {

namespace {

Tensor plane_tensor(const std::vector<Image>& planes) { return images_to_tensor(planes); }

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }
Tensor mae(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

Tensor accumulate(const Tensor& total, const Tensor& term) {
  return total.defined() ? add(total, term) : term;
}

// Crops a trailing odd row/column so the next 2x2 average is defined.
Tensor even_crop(const Tensor& x) {
  const int h = x.dim(2) & ~1, w = x.dim(3) & ~1;
  return (h == x.dim(2) && w == x.dim(3)) ? x : crop(x, h, w);
}

}  // namespace

SupervisionTargets make_targets(const std::vector<Image>& clean, const NetworkConfig& config,
                                int k) {
  require(!clean.empty(), "make_targets: no images");
  DecomposeParams dp = config.decompose;
  dp.subsample = 1;
  std::vector<Image> gray, high, low;
  for (const Image& img : clean) {
    gray.push_back(to_grayscale(img, config.gray_coeffs));
    FreqLayer layer = decompose_scale(gray.back(), k, dp);
    high.push_back(std::move(layer.high));
    low.push_back(std::move(layer.low));
  }
  return {plane_tensor(gray), plane_tensor(high), plane_tensor(low)};
}

Tensor cross_supervision_loss(const MffOutputs& out, const SupervisionTargets& tgt,
                              const CrossSupervisionOptions& options, CsTerms* terms) {
  require(out.gray.shape() == tgt.gray.shape() && out.high.shape() == tgt.high.shape() &&
              out.low.shape() == tgt.low.shape(),
          "cross supervision: prediction and target shapes differ (" +
              to_string(out.gray.shape()) + " vs " + to_string(tgt.gray.shape()) + ")");
  CsTerms t;
  t.gray = mse(out.gray, tgt.gray);
  Tensor total = t.gray;
  if (options.supervise_high) total = add(total, t.high = mae(out.high, tgt.high));
  if (options.supervise_low) total = add(total, t.low = mse(out.low, tgt.low));
  if (options.self_supervise) total = add(total, t.self = mse(out.gray, add(out.high, out.low)));
  if (terms) *terms = t;
  return total;
}

std::vector<double> gaussian_window(int size, double sigma) {
  require(size >= 1 && size % 2 == 1, "gaussian window size must be odd");
  require(sigma > 0.0, "gaussian window sigma must be positive");
  std::vector<double> g(size);
  const int c = size / 2;
  for (int i = 0; i < size; ++i) g[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) total += w[y * size + x] = g[y] * g[x];
  for (double& v : w) v /= total;
  return w;
}

Tensor ssim(const Tensor& x, const Tensor& y, const MsSsimConfig& cfg) {
  require(x.shape() == y.shape() && x.rank() == 4,
          "ssim: inputs must be equally shaped NCHW tensors");
  require(x.dim(2) >= cfg.window && x.dim(3) >= cfg.window,
          "ssim: image " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
              " is smaller than the " + std::to_string(cfg.window) + "px window");
  const Shape planes{x.dim(0) * x.dim(1), 1, x.dim(2), x.dim(3)};
  const Tensor xs = reshape(x, planes), ys = reshape(y, planes);
  const Tensor win({1, 1, cfg.window, cfg.window}, gaussian_window(cfg.window, cfg.sigma));
  auto filt = [&](const Tensor& t) { return conv2d(t, win, Tensor()); };

  // Squares go through mul(a, a) so that x == y gives bit-identical numerator
  // and denominator.
  const Tensor mx = filt(xs), my = filt(ys);
  const Tensor mxx = mul(mx, mx), myy = mul(my, my), mxy = mul(mx, my);
  const Tensor vx = sub(filt(mul(xs, xs)), mxx);
  const Tensor vy = sub(filt(mul(ys, ys)), myy);
  const Tensor cxy = sub(filt(mul(xs, ys)), mxy);
  const Tensor num = mul(add_scalar(mul_scalar(mxy, 2.0), cfg.c1),
                         add_scalar(mul_scalar(cxy, 2.0), cfg.c2));
  const Tensor den = mul(add_scalar(add(mxx, myy), cfg.c1), add_scalar(add(vx, vy), cfg.c2));
  return mean(div(num, den));
}

int ms_ssim_scales(int height, int width, const MsSsimConfig& cfg) {
  int n = 1;
  int h = height, w = width;
  while (n < static_cast<int>(cfg.alphas.size())) {
    h /= 2;
    w /= 2;
    if (std::min(h, w) < cfg.window) break;
    ++n;
  }
  return n;
}

Tensor ms_ssim_loss(const Tensor& restored, const Tensor& gt, const MsSsimConfig& cfg) {
  require(!cfg.alphas.empty(), "ms-ssim: no scale weights");
  const int n = ms_ssim_scales(restored.dim(2), restored.dim(3), cfg);
  const double norm = std::accumulate(cfg.alphas.begin(), cfg.alphas.begin() + n, 0.0);
  Tensor x = restored, y = gt, prod;
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      x = downsample_avg2(even_crop(x));
      y = downsample_avg2(even_crop(y));
    }
    Tensor s = clamp_min(ssim(x, y, cfg), cfg.floor);
    Tensor term = pow_scalar(s, cfg.alphas[i] / norm);
    prod = prod.defined() ? mul(prod, term) : term;
  }
  return add_scalar(mul_scalar(prod, -1.0), 1.0);
}

ParamSet feature_pyramid_weights(const CrConfig& cfg) {
  ParamSet p;
  int prev = 3;
  for (int s = 0; s < 5; ++s) {
    const std::string st = "fp.s" + std::to_string(s);
    for (int j = 0; j < 2; ++j) {
      const std::string c = st + ".c" + std::to_string(j);
      const int c_in = j == 0 ? prev : cfg.widths[s];
      Tensor w = init_conv_weight(c + ".w", cfg.widths[s], c_in, 3, cfg.seed);
      w.set_requires_grad(false);
      p.add(c + ".w", w);
      p.add(c + ".b", Tensor::zeros({cfg.widths[s]}));
      p.add(st + ".act" + std::to_string(j), Tensor::full({cfg.widths[s]}, 0.25));
    }
    prev = cfg.widths[s];
  }
  return p;
}

FeaturePyramid::FeaturePyramid(const CrConfig& config)
    : config_(config),
      weights_(config.weights_path.empty()
                   ? feature_pyramid_weights(config)
                   : [&] {
                       ParamSet all = load_checkpoint(config.weights_path);
                       return split_prefix(all, "fp.");
                     }()) {
  validate();
}

FeaturePyramid::FeaturePyramid(const CrConfig& config, ParamSet weights)
    : config_(config), weights_(std::move(weights)) {
  validate();
}

void FeaturePyramid::validate() {
  for (auto& [name, t] : weights_) t.set_requires_grad(false);
  int prev = 3;
  for (int s = 0; s < 5; ++s)
    for (int j = 0; j < 2; ++j) {
      const std::string c = "fp.s" + std::to_string(s) + ".c" + std::to_string(j);
      if (!weights_.contains(c + ".w") || !weights_.contains(c + ".b") ||
          !weights_.contains("fp.s" + std::to_string(s) + ".act" + std::to_string(j)))
        fail(ErrorCode::kFormat, "feature extractor weights are missing '" + c + "'");
      const Tensor& w = weights_.at(c + ".w");
      if (w.rank() != 4 || w.dim(1) != (j == 0 ? prev : w.dim(0)) || w.dim(2) != w.dim(3))
        fail(ErrorCode::kFormat, "feature extractor tensor '" + c + ".w' has shape " +
                                     to_string(w.shape()));
      prev = w.dim(0);
    }
}

std::vector<Tensor> FeaturePyramid::features(const Tensor& img) const {
  require(img.rank() == 4 && img.dim(1) == 3, "feature pyramid expects N x 3 x H x W input");
  std::vector<Tensor> out;
  Tensor x = img;
  for (int s = 0; s < 5; ++s) {
    const std::string st = "fp.s" + std::to_string(s);
    for (int j = 0; j < 2; ++j) {
      const std::string c = st + ".c" + std::to_string(j);
      const Tensor& w = weights_.at(c + ".w");
      x = prelu(conv2d(x, w, weights_.at(c + ".b"), 1, w.dim(3) / 2),
                weights_.at(st + ".act" + std::to_string(j)));
    }
    // Small or odd planes are carried through at their current size.
    if (x.dim(2) >= 2 && x.dim(3) >= 2) x = downsample_avg2(even_crop(x));
    out.push_back(x);
  }
  return out;
}

Tensor cr_loss(const Tensor& restored, const Tensor& gt, const Tensor& degraded,
               const FeaturePyramid& extractor, const CrConfig& cfg) {
  require(restored.shape() == gt.shape() && gt.shape() == degraded.shape(),
          "cr loss: restored, clean and degraded images differ in shape");
  std::vector<Tensor> fg, fd;
  {
    NoGradGuard guard;
    fg = extractor.features(gt.detach());
    fd = extractor.features(degraded.detach());
  }
  const std::vector<Tensor> fr = extractor.features(restored);
  Tensor total;
  for (std::size_t i = 0; i < fr.size(); ++i) {
    double den;
    {
      NoGradGuard guard;
      den = mae(fd[i], fg[i]).item();
    }
    Tensor ratio = div(mae(fr[i], fg[i]), Tensor::scalar(std::max(den, cfg.floor)));
    total = accumulate(total, mul_scalar(ratio, cfg.omega[i]));
  }
  return total;
}

TotalLoss total_loss(const MffOutputs& out, const Tensor& gt, const Tensor& degraded,
                     const SupervisionTargets& targets, const LossConfig& cfg,
                     const FeaturePyramid& extractor) {
  const LossWeights& w = cfg.weights;
  require(w.lambda1 >= 0.0 && w.lambda2 >= 0.0 && w.lambda_cs >= 0.0,
          "loss weights must be non-negative");
  TotalLoss r;
  LossBreakdown& b = r.breakdown;
  Tensor total;
  if (w.lambda1 > 0.0) {
    Tensor ms = ms_ssim_loss(out.restored, gt, cfg.msssim);
    b.msssim = ms.item();
    total = accumulate(total, mul_scalar(ms, w.lambda1));
  }
  if (w.lambda2 > 0.0) {
    Tensor cr = cr_loss(out.restored, gt, degraded, extractor, cfg.cr);
    b.cr = cr.item();
    total = accumulate(total, mul_scalar(cr, w.lambda2));
  }
  if (w.lambda_cs > 0.0) {
    CsTerms terms;
    Tensor cs = cross_supervision_loss(out, targets, cfg.cs, &terms);
    b.cs = cs.item();
    b.cs_gray = terms.gray.item();
    if ((b.has_cs_high = terms.high.defined())) b.cs_high = terms.high.item();
    if ((b.has_cs_low = terms.low.defined())) b.cs_low = terms.low.item();
    if ((b.has_cs_self = terms.self.defined())) b.cs_self = terms.self.item();
    total = accumulate(total, mul_scalar(cs, w.lambda_cs));
  }
  if (!total.defined()) total = Tensor::scalar(0.0);
  r.total = total;
  b.total = total.item();
  return r;
}

}  // namespace mvksr
