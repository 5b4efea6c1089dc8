// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "mvksr/error.hpp"
#include "mvksr/freq.hpp"
#include "mvksr/kernels/box.hpp"
#include "test_util.hpp"

using namespace mvksr;
using mvksr::testing::bitwise_equal;
using mvksr::testing::max_abs_diff;
using mvksr::testing::random_image;

namespace {

// Smooth gradient plus low-frequency ripples and one soft edge.
Image smooth_scene(int h, int w) {
  Image img(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      double val = 0.3 + 0.3 * u + 0.1 * std::sin(6.0 * u + 3.0 * v) + 0.1 * std::cos(5.0 * v);
      val += 0.15 / (1.0 + std::exp(-(u - 0.6) * 40.0));
      img.at(y, x) = std::clamp(val, 0.0, 1.0);
    }
  return img;
}

Image smooth_field(int h, int w) {
  Image img(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      img.at(y, x) = 0.5 + 0.15 * std::sin(3.0 * u) * std::cos(2.0 * v);
    }
  return img;
}

}  // namespace

TEST_CASE("grayscale coefficients") {
  Image red(1, 1, 3);
  red.data = {1.0, 0.0, 0.0};
  CHECK(to_grayscale(red).data[0] == doctest::Approx(0.229).epsilon(1e-12));
  CHECK(to_grayscale(red, GrayCoeffs::kStandard).data[0] == doctest::Approx(0.299));
  CHECK(to_grayscale(Image(2, 2, 3, 0.0)).data[0] == 0.0);
  CHECK(to_grayscale(Image(1, 1, 3, 1.0)).data[0] == doctest::Approx(0.930).epsilon(1e-12));
  CHECK_THROWS_AS(to_grayscale(Image(2, 2, 1)), Error);
}

TEST_CASE("guided filter on constants") {
  GuidedFilterParams gp{3, 0.1, 1};
  Image c(12, 9, 1, 0.42);
  for (double v : guided_filter(c, c, gp).data) CHECK(v == doctest::Approx(0.42).epsilon(1e-14));
  for (double v : guided_filter_reference(c, c, gp).data)
    CHECK(v == doctest::Approx(0.42).epsilon(1e-14));
}

TEST_CASE("guided filter matches the brute-force oracle") {
  double worst = 0.0;
  int cases = 0;
  for (int k : {1, 3, 5})
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Image p = random_image(16, 16, 1, 1000 + seed * 7 + k);
      Image g = seed % 2 ? random_image(16, 16, 1, 5000 + seed) : p;
      GuidedFilterParams gp{k, 0.1, 1};
      worst = std::max(worst, max_abs_diff(guided_filter(p, g, gp).data,
                                           guided_filter_reference(p, g, gp).data));
      ++cases;
    }
  CHECK(cases == 150);
  CHECK(worst < 1e-10);
}

TEST_CASE("large eps approaches the box mean") {
  // a -> 0 and b -> mean(p), so the output tends to the box mean of the
  // per-window means (two box passes).
  Image p = random_image(20, 20, 1, 3);
  Image q = guided_filter(p, p, {2, 1e6, 1});
  std::vector<double> once(p.data.size()), twice(p.data.size());
  kernels::reference::box_mean(p.data.data(), 20, 20, 2, once.data());
  kernels::reference::box_mean(once.data(), 20, 20, 2, twice.data());
  CHECK(max_abs_diff(q.data, twice) < 1e-4);
  CHECK(max_abs_diff(q.data, once) > 1e-3);
}

TEST_CASE("impulse response support") {
  for (int k : {1, 2, 3}) {
    const int n = 8 * k + 9, c = n / 2;
    Image imp(n, n, 1, 0.0);
    imp.at(c, c) = 1.0;
    GuidedFilterParams gp{k, 0.1, 1};
    Image q = guided_filter_reference(imp, imp, gp);
    Image fast = guided_filter(imp, imp, gp);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const bool inside = std::abs(y - c) <= 2 * k && std::abs(x - c) <= 2 * k;
        if (inside) {
          CHECK(q.at(y, x) > 0.0);
          CHECK(fast.at(y, x) > 0.0);
        } else {
          CHECK(q.at(y, x) == 0.0);
          CHECK(std::fabs(fast.at(y, x)) < 1e-12);
        }
      }
  }
}

TEST_CASE("self-guided filtering preserves range") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Image p = random_image(24, 31, 1, 40 + seed, 0.2, 0.7);
    for (int k : {1, 5, 13}) {
      Image q = guided_filter(p, p, {k, 0.1, 1});
      for (double v : q.data) {
        CHECK(v >= 0.2 - 1e-9);
        CHECK(v <= 0.7 + 1e-9);
      }
    }
  }
}

TEST_CASE("larger kernels give smoother low layers") {
  // Scene-like inputs: smooth shading, soft edges, block structure with mild
  // noise. White noise is excluded: with eps well below its variance the
  // filter keeps a nearly constant fraction of it at every radius.
  DecomposeParams dp;
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(smooth_scene(60 + 8 * i, 72));
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Image g = random_image(64, 64, 1, 90 + seed, -0.04, 0.04);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        g.at(y, x) += 0.2 + 0.5 * ((x / (12 + 4 * seed) + y / 16) % 2);
    images.push_back(g);
  }
  for (const Image& g : images) {
    FreqStack st = decompose_multiscale(g, dp);
    CHECK(total_variation(st.lows[2]) <= total_variation(st.lows[0]));
  }
}

TEST_CASE("fast guided filter") {
  Image img = smooth_scene(96, 128);
  for (int k : {5, 13, 25}) {
    GuidedFilterParams one{k, 0.1, 1};
    CHECK(bitwise_equal(fast_guided_filter(img, img, one).data, guided_filter(img, img, one).data));
    GuidedFilterParams two{k, 0.1, 2};
    Image exact = guided_filter(img, img, one);
    Image fast = fast_guided_filter(img, img, two);
    double mean_abs = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < exact.data.size(); ++i) {
      mean_abs += std::fabs(exact.data[i] - fast.data[i]);
      max_abs = std::max(max_abs, std::fabs(exact.data[i] - fast.data[i]));
    }
    mean_abs /= exact.data.size();
    CHECK(mean_abs < 5e-3);
    // Max error concentrates at borders where ceil(k/s)*s != k shifts the
    // truncated windows; bounded on slowly varying content.
    Image gentle = smooth_field(96, 128);
    Image ge = guided_filter(gentle, gentle, one);
    CHECK(max_abs_diff(ge.data, fast_guided_filter(gentle, gentle, two).data) < 5e-3);
    CHECK(max_abs < 2e-2);
  }
  // Odd sizes exercise partial blocks.
  Image odd = smooth_scene(37, 51);
  Image f4 = fast_guided_filter(odd, odd, {5, 0.1, 4});
  CHECK(f4.height == 37);
  CHECK(f4.width == 51);
  CHECK_THROWS_AS(fast_guided_filter(odd, odd, {5, 0.1, 3}), Error);
}

TEST_CASE("decomposition identities") {
  Image c(16, 16, 1, 0.37);
  DecomposeParams add;
  FreqStack st = decompose_multiscale(c, add);
  for (int i = 0; i < 3; ++i) {
    for (double v : st.lows[i].data) CHECK(v == doctest::Approx(0.37).epsilon(1e-13));
    for (double v : st.highs[i].data) CHECK(std::fabs(v) < 1e-13);
    for (double v : encode_high(st.highs[i], FreqMode::kAdditive).data)
      CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  }

  Image g = random_image(32, 28, 1, 17);
  FreqStack a = decompose_multiscale(g, add);
  DecomposeParams complement;
  complement.mode = FreqMode::kComplement;
  FreqStack p = decompose_multiscale(g, complement);
  for (int i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < g.data.size(); ++j) {
      CHECK(std::fabs(a.highs[i].data[j] + a.lows[i].data[j] - g.data[j]) < 1e-12);
      CHECK(p.highs[i].data[j] + p.lows[i].data[j] == 1.0);
    }
  Image enc = encode_high(a.highs[1], FreqMode::kAdditive);
  CHECK(max_abs_diff(decode_high(enc, FreqMode::kAdditive).data, a.highs[1].data) < 1e-15);

  DecomposeParams dia;
  dia.interp = KernelInterp::kDiameter;
  CHECK(dia.radius_for(5) == 2);
  CHECK(dia.radius_for(13) == 6);
  CHECK(dia.radius_for(25) == 12);
  CHECK(bitwise_equal(decompose_multiscale(g, add).lows[2].data, a.lows[2].data));
}
