// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "mvksr/error.hpp"
#include "mvksr/grad_check.hpp"
#include "mvksr/losses.hpp"
#include "mvksr/ops.hpp"
#include "mvksr/random.hpp"
#include "test_util.hpp"

using namespace mvksr;
using mvksr::testing::random_image;
using mvksr::testing::random_tensor;

namespace {

Tensor noisy(const Tensor& x, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> d(x.data().begin(), x.data().end());
  for (double& v : d) v += sigma * rng.normal();
  return Tensor(x.shape(), std::move(d));
}

// Smooth RGB content so that SSIM sits well inside (0, 1].
Tensor scene(int n, int h, int w, std::uint64_t seed) {
  std::vector<Image> imgs;
  for (int i = 0; i < n; ++i) {
    Image img(h, w, 3);
    const double ph = 0.7 * static_cast<double>(seed + i);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = 0.5 + 0.3 * std::sin(0.21 * x + ph + c) * std::cos(0.17 * y - ph);
    imgs.push_back(img);
  }
  return images_to_tensor(imgs);
}

MffOutputs heads_from_targets(const SupervisionTargets& t, const Tensor& restored) {
  return {t.gray.clone(), t.high.clone(), t.low.clone(), restored};
}

}  // namespace

TEST_CASE("cross supervision terms") {
  NetworkConfig cfg;
  std::vector<Image> clean{random_image(16, 16, 3, 1), random_image(16, 16, 3, 2)};
  SupervisionTargets t = make_targets(clean, cfg);
  for (std::size_t i = 0; i < t.gray.numel(); ++i)
    CHECK(std::fabs(t.gray.data()[i] - t.high.data()[i] - t.low.data()[i]) < 1e-12);

  Tensor rgb = images_to_tensor(clean);
  MffOutputs exact = heads_from_targets(t, rgb);
  CHECK(cross_supervision_loss(exact, t).item() < 1e-28);

  // Shift only the high head.
  MffOutputs shifted = exact;
  shifted.high = add_scalar(t.high, 0.1);
  CsTerms terms;
  cross_supervision_loss(shifted, t, {}, &terms);
  CHECK(terms.high.item() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(terms.gray.item() == 0.0);
  CHECK(terms.low.item() == 0.0);

  // Independent term-by-term oracle on random heads.
  MffOutputs r{random_tensor({2, 1, 16, 16}, 11, 0, 1), random_tensor({2, 1, 16, 16}, 12, -1, 1),
               random_tensor({2, 1, 16, 16}, 13, 0, 1), rgb};
  double g = 0, h = 0, l = 0, s = 0;
  const std::size_t n = t.gray.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double gf = r.gray.data()[i], hf = r.high.data()[i], lf = r.low.data()[i];
    g += (gf - t.gray.data()[i]) * (gf - t.gray.data()[i]);
    h += std::fabs(hf - t.high.data()[i]);
    l += (lf - t.low.data()[i]) * (lf - t.low.data()[i]);
    s += (gf - hf - lf) * (gf - hf - lf);
  }
  const double oracle = (g + h + l + s) / n;
  CHECK(std::fabs(cross_supervision_loss(r, t).item() - oracle) < 1e-12);

  CrossSupervisionOptions no_high;
  no_high.supervise_high = false;
  cross_supervision_loss(r, t, no_high, &terms);
  CHECK_FALSE(terms.high.defined());
  CHECK(std::fabs(cross_supervision_loss(r, t, no_high).item() - (g + l + s) / n) < 1e-12);

  MffOutputs bad = r;
  bad.gray = random_tensor({2, 1, 8, 8}, 1);
  CHECK_THROWS_AS(cross_supervision_loss(bad, t), Error);
}

TEST_CASE("ssim identities") {
  Tensor x = scene(2, 32, 40, 3);
  CHECK(ssim(x, x).item() == 1.0);

  const double a = 0.3, b = 0.7;
  MsSsimConfig cfg;
  const double analytic = (2 * a * b + cfg.c1) / (a * a + b * b + cfg.c1);
  CHECK(std::fabs(ssim(Tensor::full({1, 1, 16, 16}, a), Tensor::full({1, 1, 16, 16}, b)).item() -
                  analytic) < 1e-12);

  Tensor y = noisy(x, 0.05, 4);
  CHECK(std::fabs(ssim(x, y).item() - ssim(y, x).item()) < 1e-12);
  CHECK(ssim(x, noisy(x, 0.1, 5)).item() < ssim(x, noisy(x, 0.05, 5)).item());

  CHECK_THROWS_AS(ssim(Tensor::zeros({1, 1, 8, 8}), Tensor::zeros({1, 1, 8, 8})), Error);

  auto w = gaussian_window(11, 1.5);
  double total = 0;
  for (double v : w) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ms-ssim") {
  Tensor x = scene(1, 64, 64, 6);
  CHECK(ms_ssim_loss(x, x).item() == 0.0);
  CHECK(ms_ssim_scales(64, 64) == 3);
  CHECK(ms_ssim_scales(176, 200) == 5);
  CHECK(ms_ssim_scales(175, 200) == 4);
  CHECK(ms_ssim_scales(12, 12) == 1);

  MsSsimConfig one;
  one.alphas = {1.0};
  Tensor y = noisy(x, 0.05, 7);
  CHECK(ms_ssim_loss(x, y, one).item() == 1.0 - ssim(x, y, one).item());

  double prev = -1.0;
  for (double sigma : {0.02, 0.05, 0.1}) {
    const double l = ms_ssim_loss(x, noisy(x, sigma, 8)).item();
    CHECK(l > prev);
    CHECK(l > 0.0);
    prev = l;
  }
  // Odd sizes go through the even crop.
  Tensor odd = scene(1, 46, 50, 9);
  CHECK(ms_ssim_loss(odd, noisy(odd, 0.05, 10)).item() > 0.0);
}

TEST_CASE("feature pyramid") {
  CrConfig cfg;
  FeaturePyramid fp(cfg);
  Tensor x = scene(1, 64, 64, 11);
  auto f = fp.features(x);
  REQUIRE(f.size() == 5);
  const int widths[5] = {8, 16, 32, 64, 64};
  for (int i = 0; i < 5; ++i) {
    CHECK(f[i].dim(1) == widths[i]);
    CHECK(f[i].dim(2) == 64 >> (i + 1));
    CHECK(f[i].dim(3) == 64 >> (i + 1));
  }
  FeaturePyramid again(cfg);
  auto g = again.features(x);
  for (int i = 0; i < 5; ++i)
    CHECK(mvksr::testing::bitwise_equal(f[i].data(), g[i].data()));
  for (const auto& [name, t] : fp.weights()) CHECK_FALSE(t.requires_grad());

  double prev = 1e300;
  Tensor delta = random_tensor(x.shape(), 12);
  for (double d : {1e-2, 1e-3, 1e-4}) {
    auto fd = fp.features(add(x, mul_scalar(delta, d)));
    double dist = 0.0;
    for (int i = 0; i < 5; ++i) dist += mean(abs(sub(fd[i], f[i]))).item();
    CHECK(dist < prev);
    prev = dist;
  }
}

TEST_CASE("contrastive regularization") {
  CrConfig cfg;
  FeaturePyramid fp(cfg);
  Tensor gt = scene(2, 32, 32, 13);
  Tensor degraded = add_scalar(mul_scalar(gt, 0.6), 0.35);
  CHECK(cr_loss(gt, gt, degraded, fp, cfg).item() == 0.0);
  CHECK(cr_loss(degraded, gt, degraded, fp, cfg).item() == 47.0 / 32.0);
  const double floored = cr_loss(degraded, gt, gt, fp, cfg).item();
  CHECK(std::isfinite(floored));
  CHECK(floored > 0.0);

  double prev = 1e300;
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Tensor r = add(mul_scalar(degraded, 1.0 - t), mul_scalar(gt, t));
    const double l = cr_loss(r, gt, degraded, fp, cfg).item();
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("total loss") {
  NetworkConfig net;
  std::vector<Image> clean;
  for (int i = 0; i < 2; ++i) clean.push_back(tensor_to_image(scene(1, 32, 32, 20 + i)));
  Tensor gt = images_to_tensor(clean);
  Tensor degraded = add_scalar(mul_scalar(gt, 0.7), 0.25);
  SupervisionTargets t = make_targets(clean, net);
  LossConfig cfg;
  FeaturePyramid fp(cfg.cr);

  TotalLoss perfect = total_loss(heads_from_targets(t, gt), gt, degraded, t, cfg, fp);
  CHECK(std::fabs(perfect.total.item()) < 1e-28);

  MffOutputs r{random_tensor({2, 1, 32, 32}, 31, 0, 1), random_tensor({2, 1, 32, 32}, 32, -1, 1),
               random_tensor({2, 1, 32, 32}, 33, 0, 1), random_tensor({2, 3, 32, 32}, 34, 0, 1)};
  TotalLoss full = total_loss(r, gt, degraded, t, cfg, fp);
  const auto& b = full.breakdown;
  CHECK(std::fabs(0.8 * b.msssim + 0.2 * b.cr + 1.0 * b.cs - b.total) < 1e-12);
  CHECK(std::fabs(b.cs_gray + b.cs_high + b.cs_low + b.cs_self - b.cs) < 1e-12);
  CHECK(b.has_cs_high);

  LossConfig ms_only = cfg;
  ms_only.weights.lambda2 = 0.0;
  ms_only.weights.lambda_cs = 0.0;
  CHECK(total_loss(r, gt, degraded, t, ms_only, fp).total.item() ==
        0.8 * ms_ssim_loss(r.restored, gt).item());

  LossConfig no_high = cfg;
  no_high.cs.supervise_high = false;
  const auto nb = total_loss(r, gt, degraded, t, no_high, fp).breakdown;
  CHECK_FALSE(nb.has_cs_high);
  CHECK(std::fabs(nb.cs - (b.cs - b.cs_high)) < 1e-12);
}

TEST_CASE("loss gradients") {
  NetworkConfig net;
  std::vector<Image> clean{tensor_to_image(scene(1, 24, 24, 40))};
  Tensor gt = images_to_tensor(clean);
  Tensor degraded = add_scalar(mul_scalar(gt, 0.7), 0.25);
  SupervisionTargets t = make_targets(clean, net);
  LossConfig cfg;
  FeaturePyramid fp(cfg.cr);

  Tensor restored = random_tensor({1, 3, 24, 24}, 41, 0.1, 0.9, true);
  Tensor gray = random_tensor({1, 1, 24, 24}, 42, 0.1, 0.9, true);
  // Keep the MAE term away from its kink at the target.
  Tensor high = add(t.high, random_tensor({1, 1, 24, 24}, 43, 0.05, 0.4)).detach();
  high.set_requires_grad(true);
  Tensor low = random_tensor({1, 1, 24, 24}, 44, 0.1, 0.9, true);
  GradCheckOptions opts;
  opts.names = {"restored", "gray", "high", "low"};

  auto check = [&](const std::string& what, const std::function<Tensor()>& fn) {
    GradCheckReport r = grad_check(fn, {restored, gray, high, low}, opts);
    MESSAGE(what << " worst rel err " << r.max_rel_error << " at " << r.worst_input << "["
                 << r.worst_index << "] analytic " << r.worst_analytic << " numeric "
                 << r.worst_numeric);
    CHECK(r.passed(1e-4));
  };
  check("ssim", [&] { return ssim(restored, gt); });
  check("ms-ssim", [&] { return ms_ssim_loss(restored, gt); });
  check("cr", [&] { return cr_loss(restored, gt, degraded, fp, cfg.cr); });
  check("cs", [&] { return cross_supervision_loss({gray, high, low, restored}, t); });
  check("total", [&] {
    return total_loss({gray, high, low, restored}, gt, degraded, t, cfg, fp).total;
  });
}
