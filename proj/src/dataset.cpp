// SPDX-License-Identifier: Apache-2.0
#include "mvksr/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "mvksr/error.hpp"
#include "mvksr/fs_util.hpp"
#include "mvksr/kv.hpp"
#include "mvksr/random.hpp"

namespace mvksr {

namespace fs = std::filesystem;

namespace {

struct Rgb {
  double r, g, b;
};

Rgb random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

void blend(Image& img, int y, int x, const Rgb& c, double a) {
  img.at(y, x, 0) += a * (c.r - img.at(y, x, 0));
  img.at(y, x, 1) += a * (c.g - img.at(y, x, 1));
  img.at(y, x, 2) += a * (c.b - img.at(y, x, 2));
}

}  // namespace

Image procedural_scene(int h, int w, std::uint64_t seed) {
  require(h > 0 && w > 0, "procedural_scene: size must be positive");
  Rng rng(derive_seed(seed, 0x5ce9e));
  Image img(h, w, 3);

  // Sky gradient over a ground plane with a wavy horizon.
  const Rgb sky_top = random_color(rng, 0.45, 0.9), sky_low = random_color(rng, 0.6, 0.95);
  const Rgb ground = random_color(rng, 0.15, 0.6);
  const double horizon = rng.uniform(0.35, 0.65) * h;
  const double wave_a = rng.uniform(0.02, 0.08) * h, wave_f = rng.uniform(1.0, 4.0);
  const double wave_p = rng.uniform(0.0, 6.283185307179586);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double hz = horizon + wave_a * std::sin(wave_f * 6.283185307179586 * x / w + wave_p);
      if (y < hz) {
        const double t = y / std::max(1.0, hz);
        img.at(y, x, 0) = sky_top.r + t * (sky_low.r - sky_top.r);
        img.at(y, x, 1) = sky_top.g + t * (sky_low.g - sky_top.g);
        img.at(y, x, 2) = sky_top.b + t * (sky_low.b - sky_top.b);
      } else {
        const double shade = 0.8 + 0.2 * (y - hz) / std::max(1.0, h - hz);
        img.at(y, x, 0) = ground.r * shade;
        img.at(y, x, 1) = ground.g * shade;
        img.at(y, x, 2) = ground.b * shade;
      }
    }

  // Rectangles and ellipses, some striped or checkered.
  const int shapes = 4 + static_cast<int>(rng.below(5));
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = rng.uniform() < 0.5;
    const double cy = rng.uniform(0.1, 0.95) * h, cx = rng.uniform(0.0, 1.0) * w;
    const double ry = rng.uniform(0.06, 0.25) * h, rx = rng.uniform(0.06, 0.25) * w;
    const Rgb c1 = random_color(rng, 0.05, 0.95), c2 = random_color(rng, 0.05, 0.95);
    const int texture = static_cast<int>(rng.below(3));  // flat, stripes, checker
    const double period = rng.uniform(3.0, 9.0);
    const double angle = rng.uniform(0.0, 3.141592653589793);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const int y0 = std::max(0, static_cast<int>(cy - ry) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(cy + ry) + 1);
    const int x0 = std::max(0, static_cast<int>(cx - rx) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(cx + rx) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0;
        if (!inside) continue;
        bool alt = false;
        const double u = ca * x + sa * y, v = -sa * x + ca * y;
        if (texture == 1) alt = std::fmod(std::floor(u / period), 2.0) != 0.0;
        if (texture == 2)
          alt = (static_cast<long>(std::floor(u / period)) + static_cast<long>(std::floor(v / period))) % 2 != 0;
        blend(img, y, x, alt ? c2 : c1, 0.9);
      }
  }

  // Fine grain so that flat regions are not perfectly flat.
  for (double& v : img.data) v = std::clamp(v + 0.015 * (rng.uniform() - 0.5), 0.02, 0.98);
  return img;
}

std::vector<fs::path> write_procedural_scenes(const fs::path& dir, int count, int h, int w,
                                              std::uint64_t seed) {
  require(count > 0, "scene count must be positive");
  fs::create_directories(dir);
  std::vector<fs::path> paths(count);
  for (int i = 0; i < count; ++i) paths[i] = dir / fmt::format("scene_{:04d}.png", i);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      write_png(procedural_scene(h, w, derive_seed(seed, static_cast<std::uint64_t>(i))), paths[i]);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return paths;
}

namespace {

std::string path_text(const fs::path& p, const fs::path& base) {
  if (!base.empty()) {
    const fs::path rel = p.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  }
  return p.generic_string();
}

fs::path resolve(const std::string& text, const fs::path& base) {
  fs::path p(text);
  return p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& m, const fs::path& base) {
  std::ostringstream os;
  os << "format=mvksr-manifest\nversion=" << m.version << "\nseed=" << m.seed << "\ncount="
     << m.records.size() << "\n";
  for (const auto& r : m.records) {
    const auto& s = r.spec;
    os << "\nindex=" << r.index << "\nkind=" << to_string(r.kind)
       << "\nclean=" << path_text(r.clean_path, base)
       << "\ndegraded=" << path_text(r.degraded_path, base) << "\natm="
       << format_double(s.haze.atmospheric_light[0]) << ','
       << format_double(s.haze.atmospheric_light[1]) << ','
       << format_double(s.haze.atmospheric_light[2]) << "\nbeta=" << format_double(s.haze.beta)
       << "\ndepth.mode=" << to_string(s.depth.mode)
       << "\ndepth.min=" << format_double(s.depth.d_min)
       << "\ndepth.max=" << format_double(s.depth.d_max) << "\ndepth.seed=" << s.depth.seed
       << "\nrain.angle=" << format_double(s.rain.angle_deg)
       << "\nrain.length=" << format_double(s.rain.streak_length)
       << "\nrain.density=" << format_double(s.rain.density)
       << "\nrain.intensity=" << format_double(s.rain.intensity)
       << "\nrain.seed=" << s.rain.seed << "\n";
  }
  return os.str();
}

DatasetManifest parse_manifest(const std::string& text, const fs::path& base,
                               const std::string& origin) {
  const auto blocks = parse_kv_blocks(text, origin);
  if (blocks.empty() || !blocks[0].has("format") ||
      blocks[0].values.at("format") != "mvksr-manifest")
    fail(ErrorCode::kFormat, origin + ": not a dataset manifest");
  const KvBlock& head = blocks[0];
  auto wrap = [&](const KvBlock& b, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kFormat) throw;
      fail(ErrorCode::kFormat, origin + ":" + std::to_string(b.first_line) + ": " + e.what());
    }
  };
  DatasetManifest m;
  std::size_t count = 0;
  wrap(head, [&] {
    m.version = static_cast<int>(parse_int(head.get("version", origin), "version"));
    m.seed = parse_u64(head.get("seed", origin), "seed");
    count = parse_u64(head.get("count", origin), "count");
  });
  if (m.version != kManifestVersion)
    fail(ErrorCode::kBadVersion, origin + ": unsupported manifest version " + std::to_string(m.version));
  if (blocks.size() - 1 != count)
    fail(ErrorCode::kFormat, origin + ": header declares " + std::to_string(count) +
                                 " records but " + std::to_string(blocks.size() - 1) + " follow");
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    const KvBlock& b = blocks[i];
    ManifestRecord r;
    wrap(b, [&] {
      r.index = parse_u64(b.get("index", origin), "index");
      r.kind = parse_degradation_kind(b.get("kind", origin));
      r.clean_path = resolve(b.get("clean", origin), base);
      r.degraded_path = resolve(b.get("degraded", origin), base);
      const std::string& atm = b.get("atm", origin);
      std::istringstream parts(atm);
      std::string part;
      int c = 0;
      while (std::getline(parts, part, ',')) {
        require(c < 3, "atm: expected three values");
        r.spec.haze.atmospheric_light[c++] = parse_double(part, "atm");
      }
      require(c == 3, "atm: expected three values");
      r.spec.haze.beta = parse_double(b.get("beta", origin), "beta");
      r.spec.depth.mode = parse_depth_mode(b.get("depth.mode", origin));
      r.spec.depth.d_min = parse_double(b.get("depth.min", origin), "depth.min");
      r.spec.depth.d_max = parse_double(b.get("depth.max", origin), "depth.max");
      r.spec.depth.seed = parse_u64(b.get("depth.seed", origin), "depth.seed");
      r.spec.rain.angle_deg = parse_double(b.get("rain.angle", origin), "rain.angle");
      r.spec.rain.streak_length = parse_double(b.get("rain.length", origin), "rain.length");
      r.spec.rain.density = parse_double(b.get("rain.density", origin), "rain.density");
      r.spec.rain.intensity = parse_double(b.get("rain.intensity", origin), "rain.intensity");
      r.spec.rain.seed = parse_u64(b.get("rain.seed", origin), "rain.seed");
    });
    if (r.index != i - 1)
      fail(ErrorCode::kFormat, origin + ":" + std::to_string(b.first_line) +
                                   ": records must be numbered consecutively from 0");
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  write_text_atomic(path, serialize_manifest(m, fs::absolute(path).parent_path()));
}

DatasetManifest load_manifest(const fs::path& path) {
  return parse_manifest(read_file(path), fs::absolute(path).parent_path(), path.string());
}

Image replay_record(const ManifestRecord& r) {
  return quantize8(degrade(read_png(r.clean_path), r.kind, r.spec));
}

DatasetManifest build_dataset(const fs::path& clean_dir, const DatasetConfig& cfg,
                              const fs::path& out_dir) {
  require(!cfg.kinds.empty(), "build_dataset: no degradation kinds selected");
  if (!fs::is_directory(clean_dir))
    fail(ErrorCode::kIo, "'" + clean_dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(clean_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  // Decode up front so that skipped files do not shift record indices later.
  std::vector<fs::path> usable;
  for (const auto& f : files) {
    try {
      const Image img = read_png(f);
      if (img.channels != 3) {
        std::cerr << "warning: skipping '" << f.string() << "': not an RGB image\n";
        continue;
      }
      usable.push_back(fs::absolute(f).lexically_normal());
    } catch (const Error& e) {
      std::cerr << "warning: skipping '" << f.string() << "': " << e.what() << '\n';
    }
  }
  if (usable.empty())
    fail(ErrorCode::kInvalidArgument, "no usable clean images in '" + clean_dir.string() + "'");

  const fs::path deg_dir = fs::absolute(out_dir) / "degraded";
  fs::create_directories(deg_dir);
  DatasetManifest m;
  m.seed = cfg.seed;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    std::vector<std::size_t> kinds;
    if (cfg.assignment == KindAssignment::kEach) {
      kinds.resize(cfg.kinds.size());
      std::iota(kinds.begin(), kinds.end(), 0);
    } else {
      kinds.push_back(i % cfg.kinds.size());
    }
    for (std::size_t k : kinds) {
      ManifestRecord r;
      r.index = m.records.size();
      r.kind = cfg.kinds[k];
      r.clean_path = usable[i];
      r.degraded_path = deg_dir / (usable[i].stem().string() + "_" + to_string(r.kind) + ".png");
      r.spec = sample_degradation(cfg.sampler, derive_seed(cfg.seed, i, static_cast<std::uint64_t>(r.kind)));
      m.records.push_back(std::move(r));
    }
  }

  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    try {
      write_png(replay_record(m.records[i]), m.records[i].degraded_path);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  save_manifest(m, fs::absolute(out_dir) / "manifest.txt");
  return m;
}

std::vector<bool> held_out_mask(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [](std::size_t a, std::size_t b) {
    const auto ha = mix_seed(a), hb = mix_seed(b);
    return ha != hb ? ha < hb : a < b;
  });
  std::size_t held = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 5.0));
  if (n >= 2) held = std::max<std::size_t>(held, 1);
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < held; ++i) mask[order[i]] = true;
  return mask;
}

std::vector<std::size_t> split_indices(std::size_t n, bool held_out) {
  const auto mask = held_out_mask(n);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] == held_out) out.push_back(i);
  return out;
}

}  // namespace mvksr
