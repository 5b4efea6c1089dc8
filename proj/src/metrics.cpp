// SPDX-License-Identifier: Apache-2.0
#include "mvksr/metrics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <iostream>
#include <map>

#include "mvksr/error.hpp"

namespace mvksr {

namespace fs = std::filesystem;

double psnr(const Image& x, const Image& y) {
  require(x.same_shape(y) && !x.empty(), "psnr: images must be non-empty and equally shaped");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - y.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(x.data.size());
  if (mse < 1e-10) return kPsnrCap;
  return -10.0 * std::log10(mse);
}

double ssim_metric(const Image& x, const Image& y, const MsSsimConfig& config) {
  require(x.same_shape(y), "ssim: images differ in shape");
  NoGradGuard guard;
  return ssim(image_to_tensor(x), image_to_tensor(y), config).item();
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

Summary MetricReport::psnr() const {
  std::vector<double> v;
  for (const auto& s : images) v.push_back(s.psnr);
  return summarize(v);
}

Summary MetricReport::ssim() const {
  std::vector<double> v;
  for (const auto& s : images) v.push_back(s.ssim);
  return summarize(v);
}

ImageScore score_pair(const std::string& name, const Image& restored, const Image& reference) {
  return {name, mvksr::psnr(restored, reference), ssim_metric(restored, reference)};
}

namespace {

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::kIo, "'" + dir.string() + "' is not a directory");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      out[e.path().filename().string()] = e.path();
  return out;
}

}  // namespace

MetricReport eval_batch(const fs::path& restored_dir, const fs::path& gt_dir) {
  const auto restored = png_files(restored_dir);
  const auto gt = png_files(gt_dir);
  MetricReport r;
  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
  for (const auto& [name, p] : restored) {
    auto it = gt.find(name);
    if (it == gt.end())
      r.skipped.push_back(name);
    else
      pairs.push_back({name, {p, it->second}});
  }
  for (const auto& [name, p] : gt)
    if (!restored.contains(name)) r.skipped.push_back(name);
  for (const auto& name : r.skipped)
    std::cerr << "warning: '" << name << "' has no counterpart; skipped\n";
  if (pairs.empty())
    fail(ErrorCode::kInvalidArgument, "no matching PNG filenames between '" +
                                          restored_dir.string() + "' and '" + gt_dir.string() + "'");

  r.images.resize(pairs.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      const auto& [name, paths] = pairs[i];
      r.images[i] = score_pair(name, read_png(paths.first), read_png(paths.second));
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return r;
}

void write_records(std::ostream& os, const MetricReport& report, const std::string& prefix) {
  auto block = [&](const char* metric, double ImageScore::*field, Summary s) {
    for (const auto& img : report.images)
      os << prefix << metric << '.' << img.name << '=' << format_double(img.*field) << '\n';
    os << prefix << metric << ".mean=" << format_double(s.mean) << '\n';
    os << prefix << metric << ".std=" << format_double(s.std) << '\n';
  };
  block("psnr", &ImageScore::psnr, report.psnr());
  block("ssim", &ImageScore::ssim, report.ssim());
  os << prefix << "count=" << report.count() << '\n';
}

void write_table(std::ostream& os, const MetricReport& report, const std::string& title) {
  std::size_t w = 5;
  for (const auto& img : report.images) w = std::max(w, img.name.size());
  if (!title.empty()) os << title << '\n';
  os << fmt::format("{:<{}}  {:>8}  {:>6}\n", "image", w, "PSNR", "SSIM");
  for (const auto& img : report.images)
    os << fmt::format("{:<{}}  {:>8.3f}  {:>6.4f}\n", img.name, w, img.psnr, img.ssim);
  const Summary p = report.psnr(), s = report.ssim();
  os << fmt::format("{:<{}}  {:>8.3f}  {:>6.4f}\n", "mean", w, p.mean, s.mean);
  os << fmt::format("{:<{}}  {:>8.3f}  {:>6.4f}\n", "std", w, p.std, s.std);
}

}  // namespace mvksr
