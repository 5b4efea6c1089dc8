// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "mvksr/error.hpp"
#include "mvksr/grad_check.hpp"
#include "mvksr/net.hpp"
#include "mvksr/ops.hpp"
#include "test_util.hpp"

using namespace mvksr;
using mvksr::testing::bitwise_equal;
using mvksr::testing::random_image;
using mvksr::testing::random_tensor;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.level_channels = {4, 6, 8};
  cfg.level_rates = {3, 2, 1};
  cfg.mff_channels = 4;
  cfg.bottleneck_blocks = 1;
  return cfg;
}

// Scalar probe touching every head with fixed random weights.
Tensor probe_loss(const MffOutputs& o, std::uint64_t seed) {
  auto w = [&](const Tensor& t, std::uint64_t s) {
    return sum(mul(t, random_tensor(t.shape(), seed + s, -1.0, 1.0)));
  };
  return add(add(w(o.gray, 1), w(o.high, 2)), add(w(o.low, 3), w(o.restored, 4)));
}

}  // namespace

TEST_CASE("init is seeded and sized") {
  NetworkConfig cfg;
  ParamSet a = init_params(cfg), b = init_params(cfg);
  REQUIRE(a.size() == b.size());
  for (const auto& [name, t] : a) CHECK(bitwise_equal(t.data(), b.at(name).data()));

  const std::size_t count = a.scalar_count();
  MESSAGE("default parameter count: " << count);
  CHECK(count >= 500000);
  CHECK(count <= 3000000);

  CHECK(a.at("enc0.entry.w").shape() == Shape{16, 9, 1, 1});
  CHECK(a.at("enc2.mrb.mcl1.dil.w").shape() == Shape{32, 64, 3, 3});
  CHECK(a.at("enc1.mrb.conv.w").shape() == Shape{32, 32, 3, 3});
  CHECK(a.at("dec1.up.w").shape() == Shape{32, 64, 3, 3});
  CHECK(a.at("dec0.fuse.w").shape() == Shape{16, 32, 1, 1});
  CHECK(a.at("mff.bf.c1.w").shape() == Shape{16, 28, 3, 3});
  CHECK(a.at("mff.bf.c2.w").shape() == Shape{3, 16, 3, 3});
  for (const auto& [name, t] : a)
    if (name.ends_with(".w")) {
      CHECK(t.rank() == 4);
      CHECK(t.dim(2) == t.dim(3));
    }

  cfg.seed = 2;
  CHECK_FALSE(bitwise_equal(init_params(cfg).at("enc0.entry.w").data(), a.at("enc0.entry.w").data()));
}

TEST_CASE("mcl") {
  ParamSet p;
  add_mcl_params(p, "m", 16, 16, 3, 5);
  Tensor x = random_tensor({1, 16, 32, 32}, 1);
  Tensor y = mcl_forward(p, "m", x, 12);
  CHECK(y.shape() == Shape{1, 16, 32, 32});
  CHECK(p.at("m.dil.w").dim(0) == 8);
  CHECK(p.at("m.std.w").dim(0) == 8);

  Tensor zero = Tensor::zeros({1, 16, 32, 32});
  for (double v : mcl_forward(p, "m", zero, 12).data()) CHECK(v == 0.0);

  ParamSet bad;
  CHECK_THROWS_AS(add_mcl_params(bad, "m", 16, 15, 3, 5), Error);
}

TEST_CASE("mrb shape and receptive field") {
  ParamSet p;
  add_mrb_params(p, "b", 32, 3, 9);
  CHECK(mrb_forward(p, "b", random_tensor({2, 32, 16, 16}, 2), 6).shape() ==
        Shape{2, 32, 16, 16});
  CHECK_THROWS_AS(mrb_forward(p, "b", random_tensor({1, 16, 16, 16}, 2), 6), Error);

  // d out(center) / d input: direct conv paths reach 2*24+1 = 49 pixels across
  // (plus one for the trailing 3x3 conv); farther pixels couple only through the
  // layer-norm statistics.
  ParamSet q;
  add_mrb_params(q, "b", 4, 3, 11);
  const int n = 81, c = 40;
  Tensor x = random_tensor({1, 4, n, n}, 3, -1.0, 1.0, true);
  Tensor y = mrb_forward(q, "b", x, 12);
  std::vector<double> pick(y.numel(), 0.0);
  pick[static_cast<std::size_t>(c) * n + c] = 1.0;  // channel 0, centre pixel
  backward(sum(mul(y, Tensor(y.shape(), pick))));
  auto g = x.grad();
  auto mag = [&](int dy, int dx) {
    double m = 0.0;
    for (int ch = 0; ch < 4; ++ch)
      m = std::max(m, std::fabs(g[(static_cast<std::size_t>(ch) * n + c + dy) * n + c + dx]));
    return m;
  };
  double far = 0.0;
  for (int dy = -c; dy <= c; ++dy)
    for (int dx = -c; dx <= c; ++dx)
      if (std::max(std::abs(dy), std::abs(dx)) > 25) far = std::max(far, mag(dy, dx));
  for (int d : {24, -24}) {
    CHECK(mag(0, d) > 10.0 * far);
    CHECK(mag(d, 0) > 10.0 * far);
  }
}

TEST_CASE("mce and mff shapes") {
  NetworkConfig cfg;
  ParamSet p = init_params(cfg);
  Tensor views = random_tensor({1, 9, 64, 64}, 4, 0.0, 1.0);
  MceOutputs mce = mce_forward(p, cfg, views);
  CHECK(mce.features.shape() == Shape{1, 16, 64, 64});
  REQUIRE(mce.skips.size() == 2);
  CHECK(mce.skips[0].shape() == Shape{1, 16, 64, 64});
  CHECK(mce.skips[1].shape() == Shape{1, 32, 32, 32});

  MffOutputs out = mff_forward(p, cfg, mce.features, views);
  for (const Tensor* t : {&out.gray, &out.high, &out.low})
    CHECK(t->shape() == Shape{1, 1, 64, 64});
  CHECK(out.restored.shape() == Shape{1, 3, 64, 64});
  for (double v : out.restored.data()) CHECK((v > 0.0 && v < 1.0));
  for (double v : out.gray.data()) CHECK((v > 0.0 && v < 1.0));
  for (double v : out.high.data()) CHECK((v > -1.0 && v < 1.0));

  CHECK_THROWS_AS(mce_forward(p, cfg, random_tensor({1, 9, 30, 32}, 4)), Error);
}

TEST_CASE("end-to-end forward is deterministic") {
  NetworkConfig cfg;
  ParamSet p = init_params(cfg);
  std::vector<Image> img{random_image(64, 64, 3, 6)};
  MffOutputs a = mvksr_forward(p, cfg, img);
  MffOutputs b = mvksr_forward(p, cfg, img);
  CHECK(a.restored.shape() == Shape{1, 3, 64, 64});
  CHECK(bitwise_equal(a.restored.data(), b.restored.data()));
  CHECK(bitwise_equal(a.high.data(), b.high.data()));

  Tensor views = assemble_views(img, cfg);
  cfg.use_high_input = false;
  Tensor no_high = assemble_views(img, cfg);
  const std::size_t plane = 64 * 64;
  for (std::size_t i = 3 * plane; i < 6 * plane; ++i) CHECK(no_high.data()[i] == 0.0);
  for (std::size_t i = 6 * plane; i < 9 * plane; ++i) CHECK(no_high.data()[i] == views.data()[i]);
}

TEST_CASE("no dead parameters") {
  NetworkConfig cfg;
  ParamSet p = init_params(cfg);
  std::vector<Image> img{random_image(32, 32, 3, 7)};
  MffOutputs o = mvksr_forward(p, cfg, img);
  backward(probe_loss(o, 100));
  for (const auto& [name, t] : p) {
    REQUIRE_MESSAGE(t.has_grad(), name);
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    CHECK_MESSAGE(norm > 0.0, name);
  }
}

TEST_CASE("block gradients") {
  ParamSet p;
  add_mrb_params(p, "b", 6, 3, 13);
  Tensor x = random_tensor({1, 6, 10, 10}, 5, -1.0, 1.0, true);
  std::vector<Tensor> inputs{x};
  for (auto& [name, t] : p) inputs.push_back(t);
  auto report = grad_check([&] { return mrb_forward(p, "b", x, 3); }, inputs);
  MESSAGE("mrb worst rel err " << report.max_rel_error << " at " << report.worst_input);
  CHECK(report.passed(1e-4));
}

TEST_CASE("full model gradient on a tiny configuration") {
  NetworkConfig cfg = tiny_config();
  ParamSet p = init_params(cfg);
  Tensor views = random_tensor({1, 9, 8, 8}, 8, 0.0, 1.0, true);
  std::vector<Tensor> inputs{views};
  for (auto& [name, t] : p) inputs.push_back(t);
  GradCheckOptions opts;
  opts.max_coords_per_input = 40;
  auto report = grad_check([&] { return probe_loss(mvksr_forward_views(p, cfg, views), 200); },
                           inputs, opts);
  MESSAGE("tiny model worst rel err " << report.max_rel_error << " over "
                                      << report.coords_checked << " coords");
  CHECK(report.passed(1e-4));
}
