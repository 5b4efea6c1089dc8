// SPDX-License-Identifier: Apache-2.0
#include "mvksr/freq.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mvksr/error.hpp"
#include "mvksr/kernels/box.hpp"

namespace mvksr {

std::array<double, 3> gray_coefficients(GrayCoeffs coeffs) {
  if (coeffs == GrayCoeffs::kReduced) return {0.229, 0.587, 0.114};
  return {0.299, 0.587, 0.114};
}

Image to_grayscale(const Image& rgb, GrayCoeffs coeffs) {
  require(rgb.channels == 3,
          "to_grayscale: expected 3 channels, got " + std::to_string(rgb.channels));
  const auto c = gray_coefficients(coeffs);
  Image g(rgb.height, rgb.width, 1);
  for (std::size_t p = 0; p < g.data.size(); ++p)
    g.data[p] = c[0] * rgb.data[3 * p] + c[1] * rgb.data[3 * p + 1] + c[2] * rgb.data[3 * p + 2];
  return g;
}

void GuidedFilterParams::validate() const {
  require(radius >= 1, "guided filter radius must be >= 1");
  require(eps > 0.0, "guided filter eps must be > 0");
  require(subsample >= 1, "guided filter subsample must be >= 1");
}

namespace {

void check_planes(const Image& p, const Image& guide) {
  require(p.channels == 1 && guide.channels == 1, "guided filter works on 1-channel planes");
  require(p.height == guide.height && p.width == guide.width,
          "guided filter: input and guide differ in size");
  require(p.height > 0 && p.width > 0, "guided filter: empty image");
}

// mean_a, mean_b of the local linear model, both already box-averaged.
void gf_coefficients(const double* guide, const double* p, int h, int w, int r, double eps,
                     double* mean_a, double* mean_b) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const bool self = guide == p;
  std::vector<double> mean_i(n), mean_p(self ? 0 : n), corr_ii(n), corr_ip(self ? 0 : n), tmp(n);

  kernels::box_mean(guide, h, w, r, mean_i.data());
  for (std::size_t i = 0; i < n; ++i) tmp[i] = guide[i] * guide[i];
  kernels::box_mean(tmp.data(), h, w, r, corr_ii.data());
  if (!self) {
    kernels::box_mean(p, h, w, r, mean_p.data());
    for (std::size_t i = 0; i < n; ++i) tmp[i] = guide[i] * p[i];
    kernels::box_mean(tmp.data(), h, w, r, corr_ip.data());
  }
  const double* mp = self ? mean_i.data() : mean_p.data();
  const double* cip = self ? corr_ii.data() : corr_ip.data();

  double* a = tmp.data();
  std::vector<double> b(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = mean_i[i];
    const double var = corr_ii[i] - mi * mi;
    const double cov = cip[i] - mi * mp[i];
    a[i] = cov / (var + eps);
    b[i] = mp[i] - a[i] * mi;
  }
  kernels::box_mean(a, h, w, r, mean_a);
  kernels::box_mean(b.data(), h, w, r, mean_b);
}

// s x s block means; trailing partial blocks average what they cover.
std::vector<double> block_mean(const std::vector<double>& src, int h, int w, int s, int hl,
                               int wl) {
  std::vector<double> dst(static_cast<std::size_t>(hl) * wl);
#pragma omp parallel for schedule(static)
  for (int yl = 0; yl < hl; ++yl) {
    const int y0 = yl * s, y1 = std::min(h, y0 + s);
    for (int xl = 0; xl < wl; ++xl) {
      const int x0 = xl * s, x1 = std::min(w, x0 + s);
      double acc = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) acc += src[static_cast<std::size_t>(y) * w + x];
      dst[static_cast<std::size_t>(yl) * wl + xl] = acc / ((y1 - y0) * (x1 - x0));
    }
  }
  return dst;
}

struct Tap {
  int i0, i1;
  double f;
};

// Low-res sample j sits at full-res coordinate (j + 0.5) * s - 0.5.
std::vector<Tap> bilinear_taps(int full, int low, int s) {
  std::vector<Tap> taps(full);
  for (int x = 0; x < full; ++x) {
    const double src = std::clamp((x + 0.5) / s - 0.5, 0.0, static_cast<double>(low - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, low - 1);
    taps[x] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Image guided_filter(const Image& p, const Image& guide, const GuidedFilterParams& params) {
  params.validate();
  check_planes(p, guide);
  const int h = p.height, w = p.width;
  const std::size_t n = p.data.size();
  std::vector<double> ma(n), mb(n);
  const bool self = &p == &guide || p.data == guide.data;
  gf_coefficients(guide.data.data(), self ? guide.data.data() : p.data.data(), h, w,
                  params.radius, params.eps, ma.data(), mb.data());
  Image q(h, w, 1);
  for (std::size_t i = 0; i < n; ++i) q.data[i] = ma[i] * guide.data[i] + mb[i];
  return q;
}

Image guided_filter_reference(const Image& p, const Image& guide,
                              const GuidedFilterParams& params) {
  params.validate();
  check_planes(p, guide);
  const int h = p.height, w = p.width, r = params.radius;
  std::vector<double> a(p.data.size()), b(p.data.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
      const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
      const double count = static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
      double si = 0.0, sp = 0.0;
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) {
          si += guide.at(yy, xx);
          sp += p.at(yy, xx);
        }
      const double mi = si / count, mp = sp / count;
      double var = 0.0, cov = 0.0;
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) {
          const double di = guide.at(yy, xx) - mi;
          var += di * di;
          cov += di * (p.at(yy, xx) - mp);
        }
      var /= count;
      cov /= count;
      const std::size_t k = static_cast<std::size_t>(y) * w + x;
      a[k] = cov / (var + params.eps);
      b[k] = mp - a[k] * mi;
    }
  Image q(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      int count = 0;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          const std::size_t k = static_cast<std::size_t>(yy) * w + xx;
          acc += a[k] * guide.at(y, x) + b[k];
          ++count;
        }
      q.at(y, x) = acc / count;
    }
  return q;
}

Image fast_guided_filter(const Image& p, const Image& guide, const GuidedFilterParams& params) {
  params.validate();
  const int s = params.subsample;
  if (s == 1) return guided_filter(p, guide, params);
  require(s == 2 || s == 4, "fast guided filter supports subsample 2 or 4");
  check_planes(p, guide);

  const int h = p.height, w = p.width;
  const int hl = (h + s - 1) / s, wl = (w + s - 1) / s;
  const int rl = (params.radius + s - 1) / s;
  const bool self = &p == &guide || p.data == guide.data;
  const std::vector<double> gl = block_mean(guide.data, h, w, s, hl, wl);
  const std::vector<double> pl = self ? std::vector<double>{} : block_mean(p.data, h, w, s, hl, wl);
  std::vector<double> ma(gl.size()), mb(gl.size());
  gf_coefficients(gl.data(), self ? gl.data() : pl.data(), hl, wl, rl, params.eps, ma.data(),
                  mb.data());

  const auto tx = bilinear_taps(w, wl, s);
  const auto ty = bilinear_taps(h, hl, s);
  Image q(h, w, 1);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const Tap& vy = ty[y];
    const double* a0 = ma.data() + static_cast<std::size_t>(vy.i0) * wl;
    const double* a1 = ma.data() + static_cast<std::size_t>(vy.i1) * wl;
    const double* b0 = mb.data() + static_cast<std::size_t>(vy.i0) * wl;
    const double* b1 = mb.data() + static_cast<std::size_t>(vy.i1) * wl;
    const double* g = guide.data.data() + static_cast<std::size_t>(y) * w;
    double* out = q.data.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const Tap& vx = tx[x];
      const double at = a0[vx.i0] + vx.f * (a0[vx.i1] - a0[vx.i0]);
      const double ab = a1[vx.i0] + vx.f * (a1[vx.i1] - a1[vx.i0]);
      const double bt = b0[vx.i0] + vx.f * (b0[vx.i1] - b0[vx.i0]);
      const double bb = b1[vx.i0] + vx.f * (b1[vx.i1] - b1[vx.i0]);
      out[x] = (at + vy.f * (ab - at)) * g[x] + (bt + vy.f * (bb - bt));
    }
  }
  return q;
}

std::string to_string(FreqMode mode) { return mode == FreqMode::kComplement ? "paper" : "additive"; }

FreqMode parse_freq_mode(const std::string& s) {
  if (s == "paper") return FreqMode::kComplement;
  if (s == "additive") return FreqMode::kAdditive;
  fail(ErrorCode::kInvalidArgument, "unknown frequency mode '" + s + "' (paper|additive)");
}

std::string to_string(KernelInterp interp) {
  return interp == KernelInterp::kRadius ? "radius" : "diameter";
}

KernelInterp parse_kernel_interp(const std::string& s) {
  if (s == "radius") return KernelInterp::kRadius;
  if (s == "diameter") return KernelInterp::kDiameter;
  fail(ErrorCode::kInvalidArgument, "unknown kernel interpretation '" + s + "'");
}

int DecomposeParams::radius_for(int k) const {
  return interp == KernelInterp::kRadius ? k : std::max(1, (k - 1) / 2);
}

FreqLayer decompose_scale(const Image& gray, int k, const DecomposeParams& params) {
  require(gray.channels == 1, "decompose: expected a grayscale plane");
  GuidedFilterParams gp;
  gp.radius = params.radius_for(k);
  gp.eps = params.eps;
  gp.subsample = params.subsample;
  FreqLayer layer;
  layer.low = params.subsample > 1 ? fast_guided_filter(gray, gray, gp)
                                   : guided_filter(gray, gray, gp);
  layer.high = Image(gray.height, gray.width, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i)
    layer.high.data[i] =
        params.mode == FreqMode::kComplement ? 1.0 - layer.low.data[i] : gray.data[i] - layer.low.data[i];
  return layer;
}

FreqStack decompose_multiscale(const Image& gray, const DecomposeParams& params) {
  FreqStack st;
  st.mode = params.mode;
  for (std::size_t i = 0; i < kFreqScales.size(); ++i) {
    FreqLayer l = decompose_scale(gray, kFreqScales[i], params);
    st.lows[i] = std::move(l.low);
    st.highs[i] = std::move(l.high);
  }
  return st;
}

Image encode_high(const Image& high, FreqMode mode) {
  if (mode == FreqMode::kComplement) return high;
  Image out = high;
  for (double& v : out.data) v = v * 0.5 + 0.5;
  return out;
}

Image decode_high(const Image& stored, FreqMode mode) {
  if (mode == FreqMode::kComplement) return stored;
  Image out = stored;
  for (double& v : out.data) v = (v - 0.5) * 2.0;
  return out;
}

double total_variation(const Image& plane) {
  require(plane.channels == 1, "total_variation: expected one channel");
  double tv = 0.0;
  for (int y = 0; y < plane.height; ++y)
    for (int x = 0; x < plane.width; ++x) {
      if (x + 1 < plane.width) tv += std::fabs(plane.at(y, x + 1) - plane.at(y, x));
      if (y + 1 < plane.height) tv += std::fabs(plane.at(y + 1, x) - plane.at(y, x));
    }
  return tv;
}

}  // namespace mvksr
