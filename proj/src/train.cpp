// SPDX-License-Identifier: Apache-2.0
#include "mvksr/train.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "mvksr/checkpoint.hpp"
#include "mvksr/error.hpp"
#include "mvksr/fs_util.hpp"
#include "mvksr/kv.hpp"
#include "mvksr/ops.hpp"
#include "mvksr/random.hpp"

namespace mvksr {

namespace fs = std::filesystem;

double lr_schedule(int epoch, double base_lr, int decay_every, double decay) {
  require(epoch >= 0, "lr_schedule: epoch must be non-negative");
  require(decay_every > 0, "lr_schedule: decay period must be positive");
  double lr = base_lr;
  for (int i = 0; i < epoch / decay_every; ++i) lr *= decay;
  return lr;
}

void TrainConfig::validate() const {
  require(patch_size >= 16 && patch_size % 4 == 0,
          "patch size must be a multiple of 4 and at least 16");
  require(batch_size >= 1, "batch size must be positive");
  require(epochs >= 1, "epoch count must be positive");
  require(base_lr > 0.0 && std::isfinite(base_lr), "learning rate must be positive");
  require(lr_decay_every >= 1, "lr decay period must be positive");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr decay factor must be in (0, 1]");
  require(checkpoint_every >= 1, "checkpoint interval must be positive");
  double sum = 0.0;
  for (double f : mix) {
    require(f >= 0.0 && std::isfinite(f), "mix fractions must be non-negative");
    sum += f;
  }
  require(std::fabs(sum - 1.0) < 1e-6, "mix fractions must sum to 1");
  net.validate();
}

std::array<std::size_t, 3> mix_quotas(const std::array<double, 3>& mix,
                                      const std::array<std::size_t, 3>& available,
                                      std::size_t total) {
  double sum = 0.0;
  for (int k = 0; k < 3; ++k)
    if (available[k] > 0) sum += mix[k];
  require(sum > 0.0, "mix gives zero weight to every kind present in the data");
  std::array<std::size_t, 3> q{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    if (available[k] == 0) continue;
    const double exact = static_cast<double>(total) * mix[k] / sum;
    q[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(q[k]);
    used += q[k];
  }
  while (used < total) {
    int best = -1;
    for (int k = 0; k < 3; ++k)
      if (available[k] > 0 && mix[k] > 0.0 && (best < 0 || rem[k] > rem[best])) best = k;
    ++q[best];
    rem[best] = -1.0;
    ++used;
  }
  return q;
}

std::string format_log_line(const EpochStats& s) {
  return "epoch=" + std::to_string(s.epoch) + " lr=" + format_double(s.lr) +
         " loss=" + format_double(s.loss.total) + " msssim=" + format_double(s.loss.msssim) +
         " cr=" + format_double(s.loss.cr) + " cs=" + format_double(s.loss.cs);
}

// ---------------------------------------------------------------------------
// Model archive meta records.

namespace {

constexpr const char* kMetaNet = "meta.net";
constexpr const char* kMetaEpoch = "meta.epoch";
constexpr int kMetaFields = 18;

// Small integers only, so the 32-bit storage is exact.
Tensor encode_net(const NetworkConfig& n) {
  std::vector<double> v{
      1.0,  // layout version
      static_cast<double>(n.in_channels),
      static_cast<double>(n.level_channels[0]),
      static_cast<double>(n.level_channels[1]),
      static_cast<double>(n.level_channels[2]),
      static_cast<double>(n.level_rates[0]),
      static_cast<double>(n.level_rates[1]),
      static_cast<double>(n.level_rates[2]),
      static_cast<double>(n.kernel),
      static_cast<double>(n.mff_channels),
      static_cast<double>(n.bf_rate),
      static_cast<double>(n.bottleneck_blocks),
      static_cast<double>(n.gray_coeffs),
      static_cast<double>(n.decompose.mode),
      static_cast<double>(n.decompose.interp),
      std::round(n.decompose.eps * 1e6),
      n.use_high_input ? 1.0 : 0.0,
      n.use_low_input ? 1.0 : 0.0,
  };
  return Tensor({kMetaFields}, std::move(v));
}

NetworkConfig decode_net(const Tensor& t, const std::string& origin) {
  if (t.rank() != 1 || t.dim(0) != kMetaFields || t.data()[0] != 1.0)
    fail(ErrorCode::kFormat, "checkpoint '" + origin + "' has an unrecognized meta.net record");
  auto i = [&](int k) { return static_cast<int>(std::lround(t.data()[k])); };
  NetworkConfig n;
  n.in_channels = i(1);
  n.level_channels = {i(2), i(3), i(4)};
  n.level_rates = {i(5), i(6), i(7)};
  n.kernel = i(8);
  n.mff_channels = i(9);
  n.bf_rate = i(10);
  n.bottleneck_blocks = i(11);
  if (i(12) < 0 || i(12) > 1 || i(13) < 0 || i(13) > 1 || i(14) < 0 || i(14) > 1)
    fail(ErrorCode::kFormat, "checkpoint '" + origin + "' has an invalid meta.net record");
  n.gray_coeffs = static_cast<GrayCoeffs>(i(12));
  n.decompose.mode = static_cast<FreqMode>(i(13));
  n.decompose.interp = static_cast<KernelInterp>(i(14));
  n.decompose.eps = t.data()[15] / 1e6;
  n.use_high_input = i(16) != 0;
  n.use_low_input = i(17) != 0;
  try {
    n.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, "checkpoint '" + origin + "': " + e.what());
  }
  return n;
}

}  // namespace

ParamSet model_archive(const ParamSet& params, const NetworkConfig& net, int epoch) {
  ParamSet out;
  for (const auto& [name, t] : params) out.add(name, t);
  out.add(kMetaNet, encode_net(net));
  out.add(kMetaEpoch, Tensor({1}, {static_cast<double>(epoch)}));
  return out;
}

LoadedModel model_from_archive(ParamSet archive, const std::string& origin) {
  LoadedModel m;
  ParamSet meta = split_prefix(archive, "meta.");
  if (!meta.contains(kMetaNet))
    fail(ErrorCode::kFormat, "checkpoint '" + origin + "' has no meta.net record");
  m.net = decode_net(meta.at(kMetaNet), origin);
  if (meta.contains(kMetaEpoch)) m.epoch = static_cast<int>(meta.at(kMetaEpoch).data()[0]);

  // Every tensor the layout expects must be present with the right shape.
  const ParamSet expect = init_params(m.net);
  for (const auto& [name, t] : expect) {
    if (!archive.contains(name))
      fail(ErrorCode::kFormat, "checkpoint '" + origin + "' lacks tensor '" + name + "'");
    if (archive.at(name).shape() != t.shape())
      fail(ErrorCode::kFormat, "checkpoint '" + origin + "' tensor '" + name + "' has shape " +
                                   to_string(archive.at(name).shape()) + ", expected " +
                                   to_string(t.shape()));
  }
  if (archive.size() != expect.size())
    fail(ErrorCode::kFormat, "checkpoint '" + origin + "' has unexpected extra tensors");
  m.params = std::move(archive);
  return m;
}

LoadedModel load_model(const fs::path& checkpoint) {
  return model_from_archive(load_checkpoint(checkpoint), checkpoint.string());
}

// ---------------------------------------------------------------------------
// Training.

namespace {

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : previous_(compute_precision()) {
    set_compute_precision(p);
  }
  ~PrecisionScope() { set_compute_precision(previous_); }

 private:
  Precision previous_;
};

struct Pair {
  Image clean;
  Image degraded;
  DegradationKind kind = DegradationKind::kHaze;
};

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

[[noreturn]] void numerical_abort(int epoch, const MffOutputs& out, const ParamSet& params) {
  std::string where = "loss";
  const std::pair<const char*, const Tensor*> heads[] = {
      {"output.gray", &out.gray}, {"output.high", &out.high},
      {"output.low", &out.low}, {"output.restored", &out.restored}};
  bool found = false;
  for (const auto& [name, t] : params)
    if (!all_finite(t)) {
      where = "parameter '" + name + "'";
      found = true;
      break;
    }
  if (!found)
    for (const auto& [name, t] : heads)
      if (!all_finite(*t)) {
        where = std::string("tensor '") + name + "'";
        break;
      }
  fail(ErrorCode::kNumerical,
       "non-finite loss in epoch " + std::to_string(epoch) + "; first non-finite: " + where);
}

fs::path state_path(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".state"); }

void save_training_state(const fs::path& path, const ParamSet& params, const AdamState& adam,
                         int next_epoch, const NetworkConfig& net) {
  ParamSet s;
  for (const auto& [name, t] : params) {
    s.add("param." + name, t);
    s.add("adam.m." + name, Tensor(t.shape(), adam.m.at(name)));
    s.add("adam.v." + name, Tensor(t.shape(), adam.v.at(name)));
  }
  s.add("state.epoch", Tensor({1}, {static_cast<double>(next_epoch)}));
  s.add("state.step", Tensor({1}, {static_cast<double>(adam.step)}));
  s.add(kMetaNet, encode_net(net));
  save_state(s, path);
}

int load_training_state(const fs::path& path, ParamSet& params, AdamState& adam,
                        const NetworkConfig& net) {
  ParamSet s = load_state(path);
  const std::string origin = path.string();
  auto need = [&](const std::string& name) -> const Tensor& {
    if (!s.contains(name))
      fail(ErrorCode::kFormat, "training state '" + origin + "' lacks '" + name + "'");
    return s.at(name);
  };
  const auto stored = need(kMetaNet).data();
  const Tensor current = encode_net(net);
  if (!std::equal(stored.begin(), stored.end(), current.data().begin(), current.data().end()))
    fail(ErrorCode::kInvalidArgument,
         "training state '" + origin + "' was written for a different network configuration");
  for (auto& [name, t] : params) {
    const Tensor& p = need("param." + name);
    if (p.shape() != t.shape())
      fail(ErrorCode::kFormat, "training state '" + origin + "': shape mismatch for " + name);
    std::copy(p.data().begin(), p.data().end(), t.data_mut().begin());
    const auto m = need("adam.m." + name).data(), v = need("adam.v." + name).data();
    adam.m[name].assign(m.begin(), m.end());
    adam.v[name].assign(v.begin(), v.end());
  }
  adam.step = static_cast<std::int64_t>(need("state.step").data()[0]);
  return static_cast<int>(need("state.epoch").data()[0]);
}

void accumulate(LossBreakdown& into, const LossBreakdown& b, double w) {
  into.total += w * b.total;
  into.msssim += w * b.msssim;
  into.cr += w * b.cr;
  into.cs += w * b.cs;
  into.cs_gray += w * b.cs_gray;
  into.cs_high += w * b.cs_high;
  into.cs_low += w * b.cs_low;
  into.cs_self += w * b.cs_self;
  into.has_cs_high = b.has_cs_high;
  into.has_cs_low = b.has_cs_low;
  into.has_cs_self = b.has_cs_self;
}

}  // namespace

TrainResult train_loop(const DatasetManifest& manifest, const TrainConfig& cfg,
                       const TrainOptions& opts) {
  cfg.validate();
  require(!manifest.records.empty(), "training manifest has no records");
  PrecisionScope precision(cfg.precision);

  std::vector<std::size_t> indices;
  if (cfg.train_split_only && manifest.records.size() >= 2)
    indices = split_indices(manifest.records.size(), false);
  else {
    indices.resize(manifest.records.size());
    std::iota(indices.begin(), indices.end(), 0);
  }

  std::vector<Pair> pairs(indices.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < indices.size(); ++i) {
    try {
      const ManifestRecord& r = manifest.records[indices[i]];
      pairs[i] = {read_png(r.clean_path), read_png(r.degraded_path), r.kind};
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto& r = manifest.records[indices[i]];
    if (!p.clean.same_shape(p.degraded) || p.clean.channels != 3)
      fail(ErrorCode::kInvalidArgument, "record " + std::to_string(r.index) +
                                            ": clean and degraded images must be equally sized RGB");
    if (p.clean.height < cfg.patch_size || p.clean.width < cfg.patch_size)
      fail(ErrorCode::kInvalidArgument,
           "record " + std::to_string(r.index) + " (" + std::to_string(p.clean.width) + "x" +
               std::to_string(p.clean.height) + ") is smaller than the " +
               std::to_string(cfg.patch_size) + "px patch");
  }

  TrainResult result;
  result.params = init_params(cfg.net);
  ParamSet& params = result.params;
  AdamState adam;
  for (const auto& [name, t] : params) {
    adam.m[name].assign(t.numel(), 0.0);
    adam.v[name].assign(t.numel(), 0.0);
  }
  int start_epoch = 0;
  if (opts.resume && !opts.checkpoint.empty() && fs::exists(state_path(opts.checkpoint)))
    start_epoch = load_training_state(state_path(opts.checkpoint), params, adam, cfg.net);

  const FeaturePyramid extractor(cfg.loss.cr);
  const int p = cfg.patch_size;
  auto save = [&](int next_epoch) {
    if (opts.checkpoint.empty()) return;
    save_checkpoint(model_archive(params, cfg.net, next_epoch), opts.checkpoint);
    save_training_state(state_path(opts.checkpoint), params, adam, next_epoch, cfg.net);
  };

  std::array<std::vector<std::size_t>, 3> by_kind;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    by_kind[static_cast<int>(pairs[i].kind)].push_back(i);
  const std::array<std::size_t, 3> quotas = mix_quotas(
      cfg.mix, {by_kind[0].size(), by_kind[1].size(), by_kind[2].size()}, pairs.size());
  auto shuffle = [](std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
    // Each kind contributes its quota, cycling through a shuffled copy.
    std::vector<std::size_t> order;
    order.reserve(pairs.size());
    for (int k = 0; k < 3; ++k) {
      std::vector<std::size_t> pool = by_kind[k];
      shuffle(pool, rng);
      for (std::size_t j = 0; j < quotas[k]; ++j) order.push_back(pool[j % pool.size()]);
    }
    shuffle(order, rng);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr_schedule(epoch, cfg.base_lr, cfg.lr_decay_every, cfg.lr_decay);
    adam.lr = stats.lr;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      std::vector<Image> clean, degraded;
      for (std::size_t i = b0; i < b1; ++i) {
        const Pair& pr = pairs[order[i]];
        const int y = static_cast<int>(rng.below(pr.clean.height - p + 1));
        const int x = static_cast<int>(rng.below(pr.clean.width - p + 1));
        const bool flip = cfg.flips && rng.below(2) == 1;
        Image c = crop(pr.clean, y, x, p, p), d = crop(pr.degraded, y, x, p, p);
        if (flip) {
          c = flip_horizontal(c);
          d = flip_horizontal(d);
        }
        clean.push_back(std::move(c));
        degraded.push_back(std::move(d));
      }
      const SupervisionTargets targets = make_targets(clean, cfg.net);
      const Tensor gt = images_to_tensor(clean);
      const Tensor deg = images_to_tensor(degraded);
      const MffOutputs out = mvksr_forward(params, cfg.net, degraded);
      TotalLoss loss = total_loss(out, gt, deg, targets, cfg.loss, extractor);
      if (!std::isfinite(loss.breakdown.total)) numerical_abort(epoch, out, params);
      backward(loss.total);
      adam_step(params, adam);
      accumulate(stats.loss, loss.breakdown, static_cast<double>(b1 - b0) / order.size());
    }
    for (const auto& [name, t] : params)
      if (!all_finite(t))
        fail(ErrorCode::kNumerical, "parameter '" + name + "' became non-finite in epoch " +
                                        std::to_string(epoch));
    result.epochs.push_back(stats);
    if (opts.on_log) opts.on_log(format_log_line(stats));
    if ((epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) save(epoch + 1);
  }
  save(cfg.epochs);
  return result;
}

// ---------------------------------------------------------------------------
// Inference.

Image restore_image(const LoadedModel& model, const Image& degraded, bool fast,
                    RestoreTiming* timing) {
  require(!degraded.empty() && degraded.height > 0 && degraded.width > 0,
          "restore: input image is empty");
  require(degraded.channels == 3, "restore: input must be RGB");
  using clock = std::chrono::steady_clock;
  NoGradGuard no_grad;
  NetworkConfig net = model.net;
  net.decompose.subsample = fast ? 2 : 1;
  const Image padded = pad_reflect_to_multiple(degraded, 4);
  const auto t0 = clock::now();
  const Tensor views = assemble_views({padded}, net);
  const auto t1 = clock::now();
  const MffOutputs out = mvksr_forward_views(model.params, net, views);
  const auto t2 = clock::now();
  if (timing) {
    timing->decompose_s = std::chrono::duration<double>(t1 - t0).count();
    timing->inference_s = std::chrono::duration<double>(t2 - t1).count();
  }
  return crop(tensor_to_image(out.restored), 0, 0, degraded.height, degraded.width);
}

DatasetEvaluation evaluate_dataset(const LoadedModel& model, const DatasetManifest& manifest,
                                   const std::vector<std::size_t>& selected, bool fast) {
  std::vector<std::size_t> indices = selected;
  if (indices.empty()) {
    indices.resize(manifest.records.size());
    std::iota(indices.begin(), indices.end(), 0);
  }
  require(!indices.empty(), "evaluate: manifest has no records");
  std::vector<ImageScore> restored(indices.size()), baseline(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < manifest.records.size(), "evaluate: record index out of range");
    const ManifestRecord& r = manifest.records[indices[i]];
    const Image clean = read_png(r.clean_path);
    const Image degraded = read_png(r.degraded_path);
    require(clean.same_shape(degraded),
            "record " + std::to_string(r.index) + ": clean and degraded sizes differ");
    // The restored image is scored as it would be stored: 8-bit.
    const Image out = quantize8(restore_image(model, degraded, fast));
    const std::string name = r.degraded_path.filename().string();
    restored[i] = score_pair(name, out, clean);
    baseline[i] = score_pair(name, degraded, clean);
  }
  DatasetEvaluation eval;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    KindEvaluation& k = eval.kinds[manifest.records[indices[i]].kind];
    k.restored.images.push_back(restored[i]);
    k.baseline.images.push_back(baseline[i]);
  }
  return eval;
}

void write_evaluation_records(std::ostream& os, const DatasetEvaluation& eval) {
  for (const auto& [kind, k] : eval.kinds) {
    write_records(os, k.restored, to_string(kind) + ".restored.");
    write_records(os, k.baseline, to_string(kind) + ".baseline.");
  }
}

void write_evaluation_table(std::ostream& os, const DatasetEvaluation& eval) {
  os << fmt::format("{:<8} {:>5}  {:>16}  {:>16}  {:>8}\n", "kind", "n", "restored PSNR/SSIM",
                    "degraded PSNR/SSIM", "gain dB");
  for (const auto& [kind, k] : eval.kinds) {
    const Summary rp = k.restored.psnr(), rs = k.restored.ssim();
    const Summary bp = k.baseline.psnr(), bs = k.baseline.ssim();
    os << fmt::format("{:<8} {:>5}  {:>8.3f} / {:.3f}  {:>8.3f} / {:.3f}  {:>+8.3f}\n",
                      to_string(kind), k.restored.count(), rp.mean, rs.mean, bp.mean, bs.mean,
                      rp.mean - bp.mean);
  }
}

}  // namespace mvksr
