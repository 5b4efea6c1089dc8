// SPDX-License-Identifier: Apache-2.0
#include "mvksr/net.hpp"

#include <cmath>

#include "mvksr/error.hpp"
#include "mvksr/ops.hpp"
#include "mvksr/random.hpp"

namespace mvksr {

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

void add_conv(ParamSet& p, const std::string& name, int c_out, int c_in, int k,
              std::uint64_t seed) {
  p.add(name + ".w", init_conv_weight(name + ".w", c_out, c_in, k, seed));
  p.add(name + ".b", Tensor::zeros({c_out}, true));
}

void add_norm_act(ParamSet& p, const std::string& prefix, int c) {
  p.add(prefix + ".ln.g", Tensor::full({c}, 1.0, true));
  p.add(prefix + ".ln.b", Tensor::zeros({c}, true));
  p.add(prefix + ".act", Tensor::full({c}, 0.25, true));
}

Tensor conv(const ParamSet& p, const std::string& name, const Tensor& x, int dilation = 1) {
  const Tensor& w = p.at(name + ".w");
  const int k = w.dim(3);
  return conv2d(x, w, p.at(name + ".b"), dilation, dilation * (k - 1) / 2);
}

Tensor norm_act(const ParamSet& p, const std::string& prefix, const Tensor& x) {
  return prelu(layer_norm(x, p.at(prefix + ".ln.g"), p.at(prefix + ".ln.b")),
               p.at(prefix + ".act"));
}

std::string level(const char* stage, int i) { return std::string(stage) + std::to_string(i); }

}  // namespace

void NetworkConfig::validate() const {
  require(in_channels == 9, "network expects 9 input view channels");
  for (int i = 0; i < 3; ++i) {
    require(level_channels[i] > 0 && level_channels[i] % 2 == 0,
            "level channels must be positive and even");
    require(level_rates[i] >= 1, "atrous rates must be >= 1");
  }
  require(level_channels[0] < level_channels[1] && level_channels[1] < level_channels[2],
          "level channels must strictly increase");
  require(level_rates[0] > level_rates[1] && level_rates[1] > level_rates[2],
          "atrous rates must strictly decrease");
  require(kernel % 2 == 1 && kernel >= 1, "kernel must be odd");
  require(mff_channels > 0 && mff_channels % 2 == 0, "mff channels must be positive and even");
  require(bottleneck_blocks >= 0, "bottleneck block count must be >= 0");
}

Tensor init_conv_weight(const std::string& name, int c_out, int c_in, int kernel,
                        std::uint64_t seed) {
  const double fan_in = static_cast<double>(c_in) * kernel * kernel;
  const double gain = std::sqrt(2.0 / (1.0 + 0.25 * 0.25));
  const double bound = gain * std::sqrt(3.0 / fan_in);
  Rng rng(derive_seed(seed, name_hash(name)));
  std::vector<double> w(static_cast<std::size_t>(c_out) * c_in * kernel * kernel);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Tensor({c_out, c_in, kernel, kernel}, std::move(w), true);
}

void add_mcl_params(ParamSet& p, const std::string& prefix, int c_in, int c_out, int kernel,
                    std::uint64_t seed) {
  require(c_out % 2 == 0, "MCL output channels must be even (got " + std::to_string(c_out) + ")");
  add_conv(p, prefix + ".dil", c_out / 2, c_in, kernel, seed);
  add_conv(p, prefix + ".std", c_out / 2, c_in, kernel, seed);
  add_norm_act(p, prefix, c_out);
}

void add_mrb_params(ParamSet& p, const std::string& prefix, int channels, int kernel,
                    std::uint64_t seed) {
  add_mcl_params(p, prefix + ".mcl1", channels, channels, kernel, seed);
  add_mcl_params(p, prefix + ".mcl2", channels, channels, kernel, seed);
  add_conv(p, prefix + ".conv", channels, channels, kernel, seed);
  add_norm_act(p, prefix, channels);
}

ParamSet init_params(const NetworkConfig& cfg) {
  cfg.validate();
  ParamSet p;
  const auto& ch = cfg.level_channels;
  const int k = cfg.kernel;
  const std::uint64_t s = cfg.seed;

  int prev = cfg.in_channels;
  for (int i = 0; i < 3; ++i) {
    add_conv(p, level("enc", i) + ".entry", ch[i], prev, 1, s);
    add_mrb_params(p, level("enc", i) + ".mrb", ch[i], k, s);
    prev = ch[i];
  }
  for (int b = 0; b < cfg.bottleneck_blocks; ++b)
    add_mrb_params(p, level("mid", b), ch[2], k, s);

  add_mrb_params(p, "dec2.mrb", ch[2], k, s);
  for (int i = 1; i >= 0; --i) {
    const std::string d = level("dec", i);
    add_conv(p, d + ".up", ch[i], ch[i + 1], k, s);
    add_conv(p, d + ".fuse", ch[i], 2 * ch[i], 1, s);
    add_mrb_params(p, d + ".mrb", ch[i], k, s);
  }

  const int m = cfg.mff_channels;
  for (const char* head : {"gray", "high", "low"}) {
    const std::string h = std::string("mff.") + head;
    add_conv(p, h + ".c1", m, ch[0], k, s);
    p.add(h + ".act", Tensor::full({m}, 0.25, true));
    add_conv(p, h + ".c2", 1, m, k, s);
  }
  const int fused = ch[0] + 3 + cfg.in_channels;
  add_conv(p, "mff.bf.c1", m, fused, k, s);
  p.add("mff.bf.act", Tensor::full({m}, 0.25, true));
  add_mrb_params(p, "mff.bf.mrb", m, k, s);
  add_conv(p, "mff.bf.c2", 3, m, k, s);
  return p;
}

Tensor assemble_views(const std::vector<Image>& degraded, const NetworkConfig& cfg) {
  require(!degraded.empty(), "assemble_views: no images");
  const int h = degraded[0].height, w = degraded[0].width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> data(degraded.size() * 9 * plane, 0.0);
  for (std::size_t n = 0; n < degraded.size(); ++n) {
    const Image& img = degraded[n];
    require(img.channels == 3, "assemble_views: degraded images must be RGB");
    require(img.height == h && img.width == w, "assemble_views: images differ in size");
    double* out = data.data() + n * 9 * plane;
    for (int c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] = img.data[p * 3 + c];
    if (!cfg.use_high_input && !cfg.use_low_input) continue;
    FreqStack st = decompose_multiscale(to_grayscale(img, cfg.gray_coeffs), cfg.decompose);
    for (int i = 0; i < 3; ++i) {
      if (cfg.use_high_input)
        std::copy(st.highs[i].data.begin(), st.highs[i].data.end(), out + (3 + i) * plane);
      if (cfg.use_low_input)
        std::copy(st.lows[i].data.begin(), st.lows[i].data.end(), out + (6 + i) * plane);
    }
  }
  return Tensor({static_cast<int>(degraded.size()), 9, h, w}, std::move(data));
}

Tensor mcl_forward(const ParamSet& p, const std::string& prefix, const Tensor& x, int rate) {
  Tensor dil = conv(p, prefix + ".dil", x, rate);
  Tensor std_ = conv(p, prefix + ".std", x, 1);
  return norm_act(p, prefix, concat_channels({dil, std_}));
}

Tensor mrb_forward(const ParamSet& p, const std::string& prefix, const Tensor& x, int rate) {
  const int c = p.at(prefix + ".conv.w").dim(0);
  require(x.dim(1) == c, "MRB '" + prefix + "': input has " + std::to_string(x.dim(1)) +
                             " channels, block expects " + std::to_string(c));
  Tensor y = mcl_forward(p, prefix + ".mcl2", mcl_forward(p, prefix + ".mcl1", x, rate), rate);
  return norm_act(p, prefix, conv(p, prefix + ".conv", add(y, x)));
}

MceOutputs mce_forward(const ParamSet& p, const NetworkConfig& cfg, const Tensor& views) {
  require(views.rank() == 4 && views.dim(1) == cfg.in_channels,
          "MCE expects N x " + std::to_string(cfg.in_channels) + " x H x W views");
  require(views.dim(2) % 4 == 0 && views.dim(3) % 4 == 0,
          "MCE input size " + std::to_string(views.dim(2)) + "x" + std::to_string(views.dim(3)) +
              " is not a multiple of 4; pad the image first");
  const auto& r = cfg.level_rates;
  MceOutputs out;
  Tensor x = views;
  for (int i = 0; i < 3; ++i) {
    if (i > 0) x = downsample_avg2(x);
    x = conv(p, level("enc", i) + ".entry", x);
    x = mrb_forward(p, level("enc", i) + ".mrb", x, r[i]);
    if (i < 2) out.skips.push_back(x);
  }
  for (int b = 0; b < cfg.bottleneck_blocks; ++b) x = mrb_forward(p, level("mid", b), x, r[2]);

  x = mrb_forward(p, "dec2.mrb", x, r[2]);
  for (int i = 1; i >= 0; --i) {
    const std::string d = level("dec", i);
    x = conv(p, d + ".up", upsample_nearest2(x));
    x = conv(p, d + ".fuse", concat_channels({x, out.skips[i]}));
    x = mrb_forward(p, d + ".mrb", x, r[i]);
  }
  out.features = x;
  return out;
}

MffOutputs mff_forward(const ParamSet& p, const NetworkConfig& cfg, const Tensor& features,
                       const Tensor& views) {
  require(features.rank() == 4 && views.rank() == 4 && features.dim(0) == views.dim(0) &&
              features.dim(2) == views.dim(2) && features.dim(3) == views.dim(3),
          "MFF: feature and view tensors disagree in batch or spatial size");
  auto head = [&](const char* name) {
    const std::string h = std::string("mff.") + name;
    Tensor t = prelu(conv(p, h + ".c1", features), p.at(h + ".act"));
    return sigmoid(conv(p, h + ".c2", t));
  };
  MffOutputs out;
  out.gray = head("gray");
  out.high = head("high");
  if (cfg.decompose.mode == FreqMode::kAdditive)
    out.high = add_scalar(mul_scalar(out.high, 2.0), -1.0);
  out.low = head("low");

  Tensor x = concat_channels({features, out.gray, out.high, out.low, views});
  x = prelu(conv(p, "mff.bf.c1", x), p.at("mff.bf.act"));
  x = mrb_forward(p, "mff.bf.mrb", x, cfg.bf_rate);
  out.restored = sigmoid(conv(p, "mff.bf.c2", x));
  return out;
}

MffOutputs mvksr_forward_views(const ParamSet& p, const NetworkConfig& cfg, const Tensor& views) {
  MceOutputs mce = mce_forward(p, cfg, views);
  return mff_forward(p, cfg, mce.features, views);
}

MffOutputs mvksr_forward(const ParamSet& p, const NetworkConfig& cfg,
                         const std::vector<Image>& degraded) {
  return mvksr_forward_views(p, cfg, assemble_views(degraded, cfg));
}

}  // namespace mvksr
