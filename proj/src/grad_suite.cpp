// SPDX-License-Identifier: Apache-2.0
#include "mvksr/grad_suite.hpp"

#include <chrono>

#include "mvksr/losses.hpp"
#include "mvksr/net.hpp"
#include "mvksr/ops.hpp"
#include "mvksr/random.hpp"

namespace mvksr {

namespace {

Tensor uniform(Shape shape, std::uint64_t seed, double lo, double hi, bool grad = true) {
  Rng rng(seed);
  std::vector<double> d(numel(shape));
  for (double& v : d) v = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(d), grad);
}

// Fixed random projection of every head to a scalar.
Tensor probe(const MffOutputs& o, std::uint64_t seed) {
  auto w = [&](const Tensor& t, std::uint64_t s) {
    return sum(mul(t, uniform(t.shape(), seed + s, -1.0, 1.0, false)));
  };
  return add(add(w(o.gray, 1), w(o.high, 2)), add(w(o.low, 3), w(o.restored, 4)));
}

}  // namespace

std::vector<GradSuiteCase> run_grad_suite(const GradSuiteOptions& opts,
                                          const std::function<void(const GradSuiteCase&)>& on_case) {
  const Precision saved = compute_precision();
  set_compute_precision(Precision::kFloat64);
  std::vector<GradSuiteCase> out;
  const std::uint64_t s = opts.seed;

  auto run = [&](const std::string& name, const std::function<Tensor()>& fn,
                 std::vector<Tensor> inputs, GradCheckOptions go) {
    const auto t0 = std::chrono::steady_clock::now();
    GradSuiteCase c{name, grad_check(fn, std::move(inputs), go), 0.0};
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_case) on_case(c);
    out.push_back(std::move(c));
  };

  try {
    GradCheckOptions kink;
    kink.avoid_zero = true;
    const Tensor x = uniform({2, 3, 6, 6}, s + 1, -1, 1);
    const Tensor w = uniform({4, 3, 3, 3}, s + 2, -0.5, 0.5);
    const Tensor b = uniform({4}, s + 3, -0.5, 0.5);
    run("op.conv2d", [&] { return conv2d(x, w, b, 1, 1); }, {x, w, b}, kink);
    run("op.conv2d.dilated", [&] { return conv2d(x, w, b, 2, 2); }, {x, w, b}, kink);
    run("op.downsample_avg2", [&] { return downsample_avg2(x); }, {x}, kink);
    run("op.upsample_nearest2", [&] { return upsample_nearest2(x); }, {x}, kink);
    {
      const Tensor g = uniform({3}, s + 4, 0.5, 1.5), bb = uniform({3}, s + 5, -1, 1);
      run("op.layer_norm", [&] { return layer_norm(x, g, bb); }, {x, g, bb}, kink);
    }
    {
      const Tensor a = uniform({3}, s + 6, 0.1, 0.4);
      run("op.prelu", [&] { return prelu(x, a); }, {x, a}, kink);
    }
    {
      const Tensor y = uniform({2, 2, 6, 6}, s + 7, -1, 1);
      run("op.concat_slice_crop_reshape",
          [&] {
            return reshape(crop(slice_channels(concat_channels({x, y}), 1, 3), 5, 4), {2, 3, 20});
          },
          {x, y}, kink);
    }
    {
      const Tensor p = uniform({2, 3, 6, 6}, s + 8, 0.2, 1.0);
      const Tensor q = uniform({2, 3, 6, 6}, s + 9, 0.2, 1.0);
      run("op.elementwise",
          [&] {
            Tensor t = add(mul(p, q), sub(square(p), abs(sub(q, x))));
            t = add(t, div(sigmoid(x), q));
            t = add(t, pow_scalar(p, 0.37));
            t = add(t, clamp_min(x, 0.1));
            return mean(add_scalar(mul_scalar(t, 1.5), 0.25));
          },
          {p, q, x}, kink);
    }

    // Blocks.
    {
      ParamSet p;
      add_mcl_params(p, "m", 4, 6, 3, s + 10);
      const Tensor in = uniform({1, 4, 10, 10}, s + 11, -1, 1);
      std::vector<Tensor> inputs{in};
      for (auto& [n, t] : p) inputs.push_back(t);
      run("block.mcl", [&] { return mcl_forward(p, "m", in, 3); }, inputs, {});
    }
    {
      ParamSet p;
      add_mrb_params(p, "r", 6, 3, s + 12);
      const Tensor in = uniform({1, 6, 10, 10}, s + 13, -1, 1);
      std::vector<Tensor> inputs{in};
      for (auto& [n, t] : p) inputs.push_back(t);
      run("block.mrb", [&] { return mrb_forward(p, "r", in, 3); }, inputs, {});
    }
    if (opts.include_model) {
      NetworkConfig cfg;
      ParamSet p = init_params(cfg);
      const Tensor views = uniform({1, 9, 16, 16}, s + 14, 0.0, 1.0);
      std::vector<Tensor> inputs{views};
      for (auto& [n, t] : p) inputs.push_back(t);
      GradCheckOptions go;
      // Many prelu units: a 1e-5 step straddles some kinks, 1e-6 does not.
      go.step = 1e-6;
      go.max_coords_per_input = opts.model_coords_per_input;
      go.seed = s + 15;
      run("model.end_to_end_1x9x16x16",
          [&] { return probe(mvksr_forward_views(p, cfg, views), s + 16); }, inputs, go);
    }

    // Losses.
    {
      const int h = 24;
      const Tensor gt = uniform({1, 3, h, h}, s + 20, 0.1, 0.9, false);
      const Tensor degraded = add_scalar(mul_scalar(gt, 0.7), 0.25).detach();
      const Tensor restored = uniform({1, 3, h, h}, s + 21, 0.1, 0.9);
      const Tensor gray = uniform({1, 1, h, h}, s + 22, 0.1, 0.9);
      const Tensor low = uniform({1, 1, h, h}, s + 23, 0.1, 0.9);
      const Tensor tg = uniform({1, 1, h, h}, s + 24, 0.1, 0.9, false);
      const Tensor tl = uniform({1, 1, h, h}, s + 25, 0.1, 0.9, false);
      const Tensor th = sub(tg, tl).detach();
      // Keep the MAE term off its kink at the target.
      Tensor high = add(th, uniform({1, 1, h, h}, s + 26, 0.05, 0.4, false)).detach();
      high.set_requires_grad(true);
      const SupervisionTargets targets{tg, th, tl};
      const LossConfig lc;
      const FeaturePyramid fp(lc.cr);
      const std::vector<Tensor> heads{restored, gray, high, low};
      run("loss.ssim", [&] { return ssim(restored, gt); }, {restored}, {});
      run("loss.ms_ssim", [&] { return ms_ssim_loss(restored, gt); }, {restored}, {});
      run("loss.cr", [&] { return cr_loss(restored, gt, degraded, fp, lc.cr); }, {restored}, {});
      run("loss.cross_supervision",
          [&] { return cross_supervision_loss({gray, high, low, restored}, targets); }, heads, {});
      run("loss.total",
          [&] { return total_loss({gray, high, low, restored}, gt, degraded, targets, lc, fp).total; },
          heads, {});
    }
  } catch (...) {
    set_compute_precision(saved);
    throw;
  }
  set_compute_precision(saved);
  return out;
}

}  // namespace mvksr
