// SPDX-License-Identifier: Apache-2.0
//
// Full-reference quality metrics and per-image reports.
#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mvksr/image.hpp"
#include "mvksr/kv.hpp"
#include "mvksr/losses.hpp"

namespace mvksr {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels jointly; kPsnrCap when MSE < 1e-10.
double psnr(const Image& x, const Image& y);
/// losses::ssim without gradient tracking.
double ssim_metric(const Image& x, const Image& y, const MsSsimConfig& config = {});

struct ImageScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
};

Summary summarize(const std::vector<double>& values);

struct MetricReport {
  std::vector<ImageScore> images;
  std::vector<std::string> skipped;  // names present on only one side

  std::size_t count() const { return images.size(); }
  Summary psnr() const;
  Summary ssim() const;
};

/// Scores `restored` against `reference` pairwise; names label the records.
ImageScore score_pair(const std::string& name, const Image& restored, const Image& reference);

/// Matches PNG files by filename. Unmatched names are listed in `skipped` and
/// warned about on stderr; an empty intersection is an error.
MetricReport eval_batch(const std::filesystem::path& restored_dir,
                        const std::filesystem::path& gt_dir);

/// `<prefix>psnr.<image>=v`, ..., `<prefix>psnr.mean=`, `<prefix>psnr.std=`,
/// the same for ssim, then `<prefix>count=`.
void write_records(std::ostream& os, const MetricReport& report, const std::string& prefix = "");
/// Aligned table with a mean/std footer.
void write_table(std::ostream& os, const MetricReport& report, const std::string& title = "");

}  // namespace mvksr
