// SPDX-License-Identifier: Apache-2.0
#include "mvksr/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvksr/error.hpp"
#include "mvksr/kernels/box.hpp"
#include "mvksr/random.hpp"

namespace mvksr {

void HazeParams::validate() const {
  for (double a : atmospheric_light)
    require(a >= 0.0 && a <= 1.0, "atmospheric light must lie in [0,1]");
  require(beta >= 0.0, "scattering coefficient beta must be non-negative");
}

void RainGenParams::validate() const {
  require(angle_deg >= -30.0 && angle_deg <= 30.0, "rain angle must lie in [-30, 30] degrees");
  require(streak_length >= 8.0 && streak_length <= 40.0, "streak length must lie in [8, 40] px");
  require(density >= 0.0 && density <= 8.0, "rain density must lie in [0, 8] per kilopixel");
  require(intensity > 0.0 && intensity <= 0.8, "rain intensity must lie in (0, 0.8]");
}

std::string to_string(DegradationKind kind) {
  switch (kind) {
    case DegradationKind::kHaze: return "haze";
    case DegradationKind::kRain: return "rain";
    case DegradationKind::kMixed: return "mixed";
  }
  return "?";
}

DegradationKind parse_degradation_kind(const std::string& s) {
  if (s == "haze") return DegradationKind::kHaze;
  if (s == "rain") return DegradationKind::kRain;
  if (s == "mixed") return DegradationKind::kMixed;
  fail(ErrorCode::kInvalidArgument, "unknown degradation kind '" + s + "'");
}

std::string to_string(DepthMode mode) {
  switch (mode) {
    case DepthMode::kConstant: return "constant";
    case DepthMode::kRamp: return "ramp";
    case DepthMode::kSmoothNoise: return "smooth-noise";
  }
  return "?";
}

DepthMode parse_depth_mode(const std::string& s) {
  if (s == "constant") return DepthMode::kConstant;
  if (s == "ramp") return DepthMode::kRamp;
  if (s == "smooth-noise") return DepthMode::kSmoothNoise;
  fail(ErrorCode::kInvalidArgument, "unknown depth mode '" + s + "'");
}

TransmissionMap transmission_map(const DepthMap& depth, double beta) {
  require(beta >= 0.0, "transmission_map: beta must be non-negative");
  TransmissionMap t{Image(depth.map.height, depth.map.width, 1)};
  for (std::size_t i = 0; i < t.map.data.size(); ++i)
    t.map.data[i] = std::exp(-beta * depth.map.data[i]);
  return t;
}

namespace {

void require_plane_matches(const Image& clear, const Image& plane, const char* what) {
  require(plane.channels == 1 && plane.height == clear.height && plane.width == clear.width,
          std::string(what) + " shape does not match the image");
}

double airlight(const HazeParams& haze, int c, int channels) {
  return channels == 3 ? haze.atmospheric_light[c] : haze.atmospheric_light[0];
}

}  // namespace

Image synth_haze(const Image& clear, const TransmissionMap& t, const HazeParams& haze) {
  require_plane_matches(clear, t.map, "transmission map");
  Image out(clear.height, clear.width, clear.channels);
  for (std::size_t p = 0; p < clear.pixels(); ++p) {
    const double tp = t.map.data[p];
    for (int c = 0; c < clear.channels; ++c) {
      const std::size_t i = p * clear.channels + c;
      out.data[i] = clear.data[i] * tp + airlight(haze, c, clear.channels) * (1.0 - tp);
    }
  }
  return out;
}

Image synth_rain(const Image& clear, const RainField& rain) {
  require_plane_matches(clear, rain.map, "rain field");
  Image out(clear.height, clear.width, clear.channels);
  for (std::size_t p = 0; p < clear.pixels(); ++p)
    for (int c = 0; c < clear.channels; ++c) {
      const std::size_t i = p * clear.channels + c;
      out.data[i] = std::clamp(clear.data[i] + rain.map.data[p], 0.0, 1.0);
    }
  return out;
}

Image synth_mixed(const Image& clear, const RainField& rain, const TransmissionMap& t,
                  const HazeParams& haze) {
  require_plane_matches(clear, rain.map, "rain field");
  require_plane_matches(clear, t.map, "transmission map");
  Image out(clear.height, clear.width, clear.channels);
  for (std::size_t p = 0; p < clear.pixels(); ++p) {
    const double tp = t.map.data[p];
    const double s = rain.map.data[p];
    for (int c = 0; c < clear.channels; ++c) {
      const std::size_t i = p * clear.channels + c;
      // Same expression shape as synth_haze / synth_rain so the S=0 and t=1
      // reductions are bit-exact.
      const double v = (clear.data[i] + s) * tp + airlight(haze, c, clear.channels) * (1.0 - tp);
      out.data[i] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

DepthMap gen_depth(const DepthGenParams& params, int height, int width) {
  require(params.d_min <= params.d_max, "gen_depth: d_min must not exceed d_max");
  require(params.d_min >= 0.0, "gen_depth: depth must be non-negative");
  require(height > 0 && width > 0, "gen_depth: empty size");
  DepthMap d{Image(height, width, 1, params.d_min)};
  switch (params.mode) {
    case DepthMode::kConstant:
      break;
    case DepthMode::kRamp:
      for (int y = 0; y < height; ++y) {
        // top row = far (d_max), bottom row = near (d_min)
        const double f = height == 1 ? 1.0 : static_cast<double>(height - 1 - y) / (height - 1);
        const double v = params.d_min + f * (params.d_max - params.d_min);
        for (int x = 0; x < width; ++x) d.map.at(y, x) = v;
      }
      break;
    case DepthMode::kSmoothNoise: {
      Rng rng(params.seed);
      std::vector<double> a(d.map.pixels()), b(d.map.pixels());
      for (double& v : a) v = rng.uniform();
      const int radius = std::max(1, std::min(height, width) / 8);
      for (int pass = 0; pass < 3; ++pass) {
        kernels::box_mean(a.data(), height, width, radius, b.data());
        a.swap(b);
      }
      const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
      const double mn = *lo, mx = *hi;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (mx > mn) {
          const double f = (a[i] - mn) / (mx - mn);
          d.map.data[i] = params.d_min + f * (params.d_max - params.d_min);
        }
      }
      // Pin the extremes so the range is exact despite rounding.
      if (mx > mn) {
        d.map.data[lo - a.begin()] = params.d_min;
        d.map.data[hi - a.begin()] = params.d_max;
      }
      break;
    }
  }
  return d;
}

RainField gen_rain_streaks(const RainGenParams& params, int height, int width) {
  params.validate();
  require(height > 0 && width > 0, "gen_rain_streaks: empty size");
  RainField field{Image(height, width, 1)};
  const auto count = static_cast<std::size_t>(
      std::ceil(params.density * static_cast<double>(height) * width / 1000.0));
  Rng rng(params.seed);
  const double len = params.streak_length;
  const int samples = static_cast<int>(std::ceil(len * 2.0)) + 1;  // 0.5 px spacing

  std::vector<double> local;
  for (std::size_t s = 0; s < count; ++s) {
    const double cx = rng.uniform(-0.25 * len, width + 0.25 * len);
    const double cy = rng.uniform(-0.25 * len, height + 0.25 * len);
    const double angle = (params.angle_deg + rng.uniform(-3.0, 3.0)) * std::numbers::pi / 180.0;
    const double dx = std::sin(angle), dy = std::cos(angle);
    const double x0 = cx - 0.5 * len * dx, y0 = cy - 0.5 * len * dy;

    // Per-streak buffer over the bounding box; max-combine keeps the peak at
    // `intensity` even where neighbouring samples overlap.
    const int bx0 = static_cast<int>(std::floor(std::min(x0, x0 + len * dx))) - 1;
    const int by0 = static_cast<int>(std::floor(std::min(y0, y0 + len * dy))) - 1;
    const int bw = static_cast<int>(std::ceil(std::fabs(len * dx))) + 4;
    const int bh = static_cast<int>(std::ceil(std::fabs(len * dy))) + 4;
    local.assign(static_cast<std::size_t>(bw) * bh, 0.0);
    for (int k = 0; k < samples; ++k) {
      const double u = static_cast<double>(k) / (samples - 1);
      const double alpha = params.intensity * (1.0 - std::fabs(2.0 * u - 1.0));
      const double px = x0 + u * len * dx - bx0;
      const double py = y0 + u * len * dy - by0;
      const int ix = static_cast<int>(std::floor(px)), iy = static_cast<int>(std::floor(py));
      const double fx = px - ix, fy = py - iy;
      const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int offs[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
      for (int j = 0; j < 4; ++j) {
        const int lx = ix + offs[j][0], ly = iy + offs[j][1];
        if (lx < 0 || ly < 0 || lx >= bw || ly >= bh) continue;
        double& cell = local[static_cast<std::size_t>(ly) * bw + lx];
        cell = std::max(cell, alpha * wts[j]);
      }
    }
    for (int ly = 0; ly < bh; ++ly)
      for (int lx = 0; lx < bw; ++lx) {
        const int gx = bx0 + lx, gy = by0 + ly;
        if (gx < 0 || gy < 0 || gx >= width || gy >= height) continue;
        field.map.at(gy, gx) += local[static_cast<std::size_t>(ly) * bw + lx];
      }
  }
  for (double& v : field.map.data) v = std::clamp(v, 0.0, 1.0);
  return field;
}

Image degrade(const Image& clear, DegradationKind kind, const DegradationSpec& spec) {
  spec.haze.validate();
  switch (kind) {
    case DegradationKind::kHaze: {
      auto t = transmission_map(gen_depth(spec.depth, clear.height, clear.width), spec.haze.beta);
      return synth_haze(clear, t, spec.haze);
    }
    case DegradationKind::kRain:
      return synth_rain(clear, gen_rain_streaks(spec.rain, clear.height, clear.width));
    case DegradationKind::kMixed: {
      auto t = transmission_map(gen_depth(spec.depth, clear.height, clear.width), spec.haze.beta);
      return synth_mixed(clear, gen_rain_streaks(spec.rain, clear.height, clear.width), t,
                         spec.haze);
    }
  }
  fail(ErrorCode::kInvalidArgument, "unknown degradation kind");
}

DegradationSpec sample_degradation(const DegradationSampler& s, std::uint64_t seed) {
  Rng rng(seed);
  DegradationSpec spec;
  const double a0 = s.fixed_atm >= 0.0 ? s.fixed_atm : rng.uniform(s.atm_min, s.atm_max);
  spec.haze.atmospheric_light = {a0, a0, a0};
  if (s.per_channel_atm && s.fixed_atm < 0.0) {
    spec.haze.atmospheric_light[1] = rng.uniform(s.atm_min, s.atm_max);
    spec.haze.atmospheric_light[2] = rng.uniform(s.atm_min, s.atm_max);
  }
  spec.haze.beta = s.fixed_beta >= 0.0 ? s.fixed_beta : rng.uniform(s.beta_min, s.beta_max);
  spec.depth.mode = rng.uniform() < 0.5 ? DepthMode::kRamp : DepthMode::kSmoothNoise;
  spec.depth.d_min = s.depth_min;
  spec.depth.d_max = s.depth_max;
  spec.depth.seed = rng.next();
  spec.rain.angle_deg = rng.uniform(-s.rain_angle_max, s.rain_angle_max);
  spec.rain.streak_length = rng.uniform(s.rain_length_min, s.rain_length_max);
  spec.rain.density = rng.uniform(s.rain_density_min, s.rain_density_max);
  spec.rain.intensity = rng.uniform(s.rain_intensity_min, s.rain_intensity_max);
  spec.rain.seed = rng.next();
  return spec;
}

}  // namespace mvksr
