// SPDX-License-Identifier: Apache-2.0
//
// mvksr: synth, decompose, train, restore, eval, gradcheck, bench.
#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mvksr/checkpoint.hpp"
#include "mvksr/dataset.hpp"
#include "mvksr/error.hpp"
#include "mvksr/freq.hpp"
#include "mvksr/fs_util.hpp"
#include "mvksr/grad_suite.hpp"
#include "mvksr/kv.hpp"
#include "mvksr/metrics.hpp"
#include "mvksr/random.hpp"
#include "mvksr/train.hpp"

namespace fs = std::filesystem;
using namespace mvksr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIoError = 2, kNumericalError = 3, kFormatError = 4 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return kUsage;
    case ErrorCode::kIo: return kIoError;
    case ErrorCode::kNumerical: return kNumericalError;
    case ErrorCode::kBadMagic:
    case ErrorCode::kBadVersion:
    case ErrorCode::kBadCrc:
    case ErrorCode::kFormat: return kFormatError;
  }
  return kUsage;
}

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) fail(ErrorCode::kInvalidArgument, "size must look like WxH: " + s);
  const auto w = parse_int(s.substr(0, x), "width"), h = parse_int(s.substr(x + 1), "height");
  require(w > 0 && h > 0 && w <= 1 << 15 && h <= 1 << 15, "size out of range: " + s);
  return {static_cast<int>(w), static_cast<int>(h)};
}

std::vector<DegradationKind> parse_kinds(const std::string& s) {
  std::vector<DegradationKind> kinds;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ','))
    if (!part.empty()) kinds.push_back(parse_degradation_kind(part));
  require(!kinds.empty(), "--kinds selects no degradation kind");
  return kinds;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string clean, out, kinds = "haze,rain,mixed", assign = "each", size = "64x64";
  std::uint64_t seed = 1;
  int procedural = 0;
  double beta = -1.0, atm = -1.0;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Build a degraded corpus and its manifest");
  c->add_option("--clean", a.clean, "Directory of clean PNG images");
  c->add_option("--out", a.out, "Output directory (degraded/ and manifest.txt)")->required();
  c->add_option("--kinds", a.kinds, "Comma-separated subset of haze,rain,mixed")
      ->capture_default_str();
  c->add_option("--assign", a.assign, "each: one record per kind per image; cycle: one kind per image")
      ->check(CLI::IsMember({"each", "cycle"}))
      ->capture_default_str();
  c->add_option("--seed", a.seed, "Corpus seed")->capture_default_str();
  c->add_option("--beta", a.beta, "Fixed scattering coefficient (default: sampled)");
  c->add_option("--atm-light", a.atm, "Fixed airlight in [0,1] (default: sampled)");
  c->add_option("--procedural", a.procedural,
                "Generate this many procedural clean scenes into <out>/clean first");
  c->add_option("--size", a.size, "Procedural scene size WxH")->capture_default_str();
}

int run_synth(const SynthArgs& a) {
  fs::path clean = a.clean;
  if (a.procedural > 0) {
    require(a.clean.empty(), "--clean and --procedural are mutually exclusive");
    const auto [w, h] = parse_size(a.size);
    clean = fs::path(a.out) / "clean";
    write_procedural_scenes(clean, a.procedural, h, w, derive_seed(a.seed, 0xc1ea));
  }
  require(!clean.empty(), "synth needs --clean DIR or --procedural N");
  DatasetConfig cfg;
  cfg.kinds = parse_kinds(a.kinds);
  cfg.assignment = a.assign == "cycle" ? KindAssignment::kCycle : KindAssignment::kEach;
  cfg.seed = a.seed;
  if (a.beta >= 0.0) cfg.sampler.fixed_beta = a.beta;
  if (a.atm >= 0.0) {
    require(a.atm <= 1.0, "--atm-light must be in [0,1]");
    cfg.sampler.fixed_atm = a.atm;
  }
  const DatasetManifest m = build_dataset(clean, cfg, a.out);
  std::cout << "wrote " << m.records.size() << " records to "
            << (fs::path(a.out) / "manifest.txt").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
  std::string in, out, mode = "additive", interp = "radius";
  double eps = 0.1;
  bool fast = false;
};

void add_decompose(CLI::App& app, DecomposeArgs& a) {
  auto* c = app.add_subcommand("decompose", "Write the grayscale and frequency layers of an image");
  c->add_option("--in", a.in, "Input PNG")->required();
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--mode", a.mode, "paper: high = 1 - low; additive: high = gray - low")
      ->check(CLI::IsMember({"paper", "additive"}))
      ->capture_default_str();
  c->add_option("--interp", a.interp, "Scale k as window radius or diameter")
      ->check(CLI::IsMember({"radius", "diameter"}))
      ->capture_default_str();
  c->add_option("--eps", a.eps, "Guided filter regularization")->capture_default_str();
  c->add_flag("--fast", a.fast, "Use the subsampled (s=2) guided filter");
}

int run_decompose(const DecomposeArgs& a) {
  DecomposeParams dp;
  dp.mode = parse_freq_mode(a.mode);
  dp.interp = parse_kernel_interp(a.interp);
  dp.eps = a.eps;
  dp.subsample = a.fast ? 2 : 1;
  const Image img = read_png(a.in);
  const Image gray = img.channels == 3 ? to_grayscale(img) : img;
  const FreqStack st = decompose_multiscale(gray, dp);
  const fs::path out = a.out;
  fs::create_directories(out);
  write_png(gray, out / "gray.png");
  for (std::size_t i = 0; i < kFreqScales.size(); ++i) {
    const int k = kFreqScales[i];
    write_png(st.lows[i], out / fmt::format("low_k{}.png", k));
    write_png(encode_high(st.highs[i], dp.mode), out / fmt::format("high_k{}.png", k));
  }
  std::cout << "wrote gray.png, low_k{5,13,25}.png, high_k{5,13,25}.png to " << out.string()
            << " (mode=" << a.mode << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, out, precision = "f32";
  TrainConfig cfg;
  bool no_high_input = false, no_low_input = false;
  bool no_high_sup = false, no_low_sup = false, no_self_sup = false;
  bool all_records = false, no_flips = false, resume = false;
  double lambda1 = 0.8, lambda2 = 0.2, lambda_cs = 1.0;
  std::string fp_weights;
  std::vector<double> mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train a model on a manifest");
  c->add_option("--manifest", a.manifest, "Dataset manifest")->required();
  c->add_option("--out", a.out, "Checkpoint path (also <out>.state and <out>.log)")->required();
  c->add_option("--epochs", a.cfg.epochs, "Epoch count")->capture_default_str();
  c->add_option("--seed", a.cfg.seed, "Initialization and shuffling seed")->capture_default_str();
  c->add_option("--batch", a.cfg.batch_size, "Batch size")->capture_default_str();
  c->add_option("--patch", a.cfg.patch_size, "Square crop size (multiple of 4)")
      ->capture_default_str();
  c->add_option("--lr", a.cfg.base_lr, "Initial learning rate")->capture_default_str();
  c->add_option("--decay-every", a.cfg.lr_decay_every, "Epochs between lr decays")
      ->capture_default_str();
  c->add_option("--decay", a.cfg.lr_decay, "lr multiplier at each decay")->capture_default_str();
  c->add_option("--checkpoint-every", a.cfg.checkpoint_every, "Epochs between checkpoints")
      ->capture_default_str();
  c->add_option("--precision", a.precision, "Convolution arithmetic: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  c->add_flag("--no-high-input", a.no_high_input, "Zero the high-frequency input views");
  c->add_flag("--no-low-input", a.no_low_input, "Zero the low-frequency input views");
  c->add_flag("--no-high-sup", a.no_high_sup, "Drop the high-head L1 supervision term");
  c->add_flag("--no-low-sup", a.no_low_sup, "Drop the low-head supervision term");
  c->add_flag("--no-self-sup", a.no_self_sup, "Drop the gray = high + low self term");
  c->add_option("--lambda1", a.lambda1, "MS-SSIM weight")->capture_default_str();
  c->add_option("--lambda2", a.lambda2, "Contrastive weight")->capture_default_str();
  c->add_option("--lambda-cs", a.lambda_cs, "Cross-supervision weight")->capture_default_str();
  c->add_option("--fp-weights", a.fp_weights,
                "Checkpoint holding fp.* feature-extractor weights for the contrastive loss");
  c->add_option("--mix", a.mix, "Per-epoch share of haze,rain,mixed samples (sums to 1)")
      ->expected(3)
      ->delimiter(',');
  c->add_flag("--all-records", a.all_records, "Train on every record, not just the 80% split");
  c->add_flag("--no-flips", a.no_flips, "Disable horizontal flip augmentation");
  c->add_flag("--resume", a.resume, "Continue from <out>.state if present");
}

int run_train(TrainArgs& a) {
  TrainConfig cfg = a.cfg;
  cfg.precision = a.precision == "f64" ? Precision::kFloat64 : Precision::kFloat32;
  cfg.net.use_high_input = !a.no_high_input;
  cfg.net.use_low_input = !a.no_low_input;
  cfg.net.seed = cfg.seed;
  cfg.loss.cs.supervise_high = !a.no_high_sup;
  cfg.loss.cs.supervise_low = !a.no_low_sup;
  cfg.loss.cs.self_supervise = !a.no_self_sup;
  cfg.loss.weights = {a.lambda1, a.lambda2, a.lambda_cs};
  cfg.loss.cr.weights_path = a.fp_weights;
  cfg.train_split_only = !a.all_records;
  cfg.flips = !a.no_flips;
  std::copy(a.mix.begin(), a.mix.end(), cfg.mix.begin());
  cfg.validate();

  const DatasetManifest m = load_manifest(a.manifest);
  const fs::path log_path = a.out + ".log";
  if (!a.resume || !fs::exists(log_path)) write_text_atomic(log_path, "");
  std::ofstream log(log_path, std::ios::app);
  if (!log) fail(ErrorCode::kIo, "cannot open '" + log_path.string() + "'");
  TrainOptions opts;
  opts.checkpoint = a.out;
  opts.resume = a.resume;
  opts.on_log = [&](const std::string& line) {
    std::cout << line << std::endl;
    log << line << '\n' << std::flush;
  };
  const auto t0 = std::chrono::steady_clock::now();
  train_loop(m, cfg, opts);
  std::cerr << fmt::format("training finished in {:.1f} s; checkpoint {}\n", seconds_since(t0),
                           a.out);
  return kOk;
}

// ---------------------------------------------------------------------------

struct RestoreArgs {
  std::string ckpt, in, out, precision = "f32";
  bool fast = false;
};

void add_restore(CLI::App& app, RestoreArgs& a) {
  auto* c = app.add_subcommand("restore", "Restore one degraded image");
  c->add_option("--ckpt", a.ckpt, "Model checkpoint")->required();
  c->add_option("--in", a.in, "Degraded PNG")->required();
  c->add_option("--out", a.out, "Restored PNG")->required();
  c->add_flag("--fast", a.fast, "Use the subsampled guided filter for the input views");
  c->add_option("--precision", a.precision, "Convolution arithmetic: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
}

int run_restore(const RestoreArgs& a) {
  set_compute_precision(a.precision == "f64" ? Precision::kFloat64 : Precision::kFloat32);
  const LoadedModel model = load_model(a.ckpt);
  const Image img = read_png(a.in);
  RestoreTiming t;
  const Image out = restore_image(model, img, a.fast, &t);
  write_png(out, a.out);
  std::cout << fmt::format("{}x{} decompose={:.4f}s inference={:.4f}s total={:.4f}s\n",
                           img.width, img.height, t.decompose_s, t.inference_s,
                           t.decompose_s + t.inference_s);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, manifest, report, split = "held-out", precision = "f32";
  bool fast = false;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  c->add_option("--ckpt", a.ckpt, "Model checkpoint")->required();
  c->add_option("--manifest", a.manifest, "Dataset manifest")->required();
  c->add_option("--report", a.report, "Report file (key=value records)")->required();
  c->add_option("--split", a.split, "Records to evaluate: held-out, train or all")
      ->check(CLI::IsMember({"held-out", "train", "all"}))
      ->capture_default_str();
  c->add_flag("--fast", a.fast, "Use the subsampled guided filter");
  c->add_option("--precision", a.precision, "Convolution arithmetic: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
}

int run_eval(const EvalArgs& a) {
  set_compute_precision(a.precision == "f64" ? Precision::kFloat64 : Precision::kFloat32);
  const LoadedModel model = load_model(a.ckpt);
  const DatasetManifest m = load_manifest(a.manifest);
  std::vector<std::size_t> idx;
  if (a.split != "all") idx = split_indices(m.records.size(), a.split == "held-out");
  if (a.split != "all" && idx.empty())
    fail(ErrorCode::kInvalidArgument, "the " + a.split + " split is empty");
  const DatasetEvaluation ev = evaluate_dataset(model, m, idx, a.fast);
  std::ostringstream rec;
  write_evaluation_records(rec, ev);
  write_text_atomic(a.report, rec.str());
  write_evaluation_table(std::cout, ev);
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradArgs {
  double tol = 1e-4;
  std::size_t coords = 3;
  bool skip_model = false;
};

void add_gradcheck(CLI::App& app, GradArgs& a) {
  auto* c = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  c->add_option("--tol", a.tol, "Relative error tolerance")->capture_default_str();
  c->add_option("--model-coords", a.coords,
                "Coordinates sampled per tensor in the end-to-end check (0 = all)")
      ->capture_default_str();
  c->add_flag("--skip-model", a.skip_model, "Skip the end-to-end model check");
}

int run_gradcheck(const GradArgs& a) {
  GradSuiteOptions o;
  o.model_coords_per_input = a.coords;
  o.include_model = !a.skip_model;
  double worst = 0.0;
  bool ok = true;
  run_grad_suite(o, [&](const GradSuiteCase& c) {
    const bool pass = c.report.passed(a.tol);
    ok = ok && pass;
    worst = std::max(worst, c.report.max_rel_error);
    std::cout << fmt::format("{:<32} {} rel_err={:.3e} coords={} ({:.1f}s)\n", c.name,
                             pass ? "ok  " : "FAIL", c.report.max_rel_error,
                             c.report.coords_checked, c.seconds);
  });
  std::cout << fmt::format("worst rel err {:.3e} (tol {:.1e})\n", worst, a.tol);
  return ok ? kOk : kNumericalError;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string size = "1080x720", ckpt, precision = "f32";
  int repeats = 3;
  bool skip_inference = false;
};

void add_bench(CLI::App& app, BenchArgs& a) {
  auto* c = app.add_subcommand("bench", "Time the guided filters and full inference");
  c->add_option("--size", a.size, "Image size WxH")->capture_default_str();
  c->add_option("--repeats", a.repeats, "Timing repetitions (best is reported)")
      ->capture_default_str();
  c->add_option("--ckpt", a.ckpt, "Checkpoint for the inference timing (default: fresh init)");
  c->add_flag("--skip-inference", a.skip_inference, "Only time the guided filters");
  c->add_option("--precision", a.precision, "Convolution arithmetic: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
}

int run_bench(const BenchArgs& a) {
  require(a.repeats >= 1, "--repeats must be positive");
  set_compute_precision(a.precision == "f64" ? Precision::kFloat64 : Precision::kFloat32);
  const auto [w, h] = parse_size(a.size);
  const Image scene = procedural_scene(h, w, 7);
  const Image gray = to_grayscale(scene);
  auto best_of = [&](auto&& fn) {
    double best = 1e300;
    for (int i = 0; i < a.repeats; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      best = std::min(best, seconds_since(t0));
    }
    return best;
  };
  DecomposeParams dp;
  GuidedFilterParams gp{dp.radius_for(25), dp.eps, 1};
  const double exact = best_of([&] { guided_filter(gray, gray, gp); });
  gp.subsample = 2;
  const double fast = best_of([&] { fast_guided_filter(gray, gray, gp); });
  std::cout << fmt::format("guided filter k=25 {}x{}: exact {:.4f}s fast(s=2) {:.4f}s speedup {:.2f}x\n",
                           w, h, exact, fast, exact / fast);
  if (!a.skip_inference) {
    LoadedModel model;
    if (a.ckpt.empty()) {
      model.params = init_params(model.net);
    } else {
      model = load_model(a.ckpt);
    }
    for (bool f : {false, true}) {
      RestoreTiming t;
      const auto t0 = std::chrono::steady_clock::now();
      restore_image(model, scene, f, &t);
      std::cout << fmt::format("inference{} {}x{}: decompose {:.3f}s network {:.3f}s total {:.3f}s\n",
                               f ? " (fast)" : "", w, h, t.decompose_s, t.inference_s,
                               seconds_since(t0));
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view restoration of hazy and rainy images", "mvksr"};
  app.set_config("--config", "",
                 "INI file; subcommand options go under [name] sections, command-line values win");
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthArgs synth;
  DecomposeArgs decompose;
  TrainArgs train;
  RestoreArgs restore;
  EvalArgs eval;
  GradArgs grad;
  BenchArgs bench;
  add_synth(app, synth);
  add_decompose(app, decompose);
  add_train(app, train);
  add_restore(app, restore);
  add_eval(app, eval);
  add_gradcheck(app, grad);
  add_bench(app, bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") return run_synth(synth);
    if (cmd == "decompose") return run_decompose(decompose);
    if (cmd == "train") return run_train(train);
    if (cmd == "restore") return run_restore(restore);
    if (cmd == "eval") return run_eval(eval);
    if (cmd == "gradcheck") return run_gradcheck(grad);
    if (cmd == "bench") return run_bench(bench);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
