// SPDX-License-Identifier: Apache-2.0
#include "mvksr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mvksr/error.hpp"
#include "mvksr/ops.hpp"

namespace mvksr {

namespace {

// Scalar view of an arbitrary op output: <out, R> for a fixed random R.
class Projector {
 public:
  explicit Projector(std::uint64_t seed) : seed_(seed) {}

  Tensor operator()(const Tensor& out) {
    if (out.numel() == 1) return out;
    if (!weights_.defined() || weights_.numel() != out.numel()) {
      std::mt19937_64 rng(seed_);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      std::vector<double> w(out.numel());
      for (double& x : w) x = u(rng);
      weights_ = Tensor(out.shape(), std::move(w));
    }
    return sum(mul(out, reshape(weights_, out.shape())));
  }

 private:
  std::uint64_t seed_;
  Tensor weights_;
};

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& fn, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  require(options.step > 0.0, "grad_check: step must be positive");
  Projector project(options.seed ^ 0x9e3779b97f4a7c15ULL);

  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tensor loss = project(fn());
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.numel(), 0.0);
    t.zero_grad();
  }

  auto eval = [&] {
    NoGradGuard guard;
    return project(fn()).item();
  };

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      auto data = t.data_mut();
      const double x0 = data[i];
      if (options.avoid_zero && std::fabs(x0) <= 2.0 * options.step) {
        ++report.coords_skipped;
        continue;
      }
      data[i] = x0 + options.step;
      const double fp = eval();
      data[i] = x0 - options.step;
      const double fm = eval();
      data[i] = x0;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), options.abs_floor});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.coords_checked;
      if (report.coords_checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input =
            k < options.names.size() ? options.names[k] : "input" + std::to_string(k);
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

void merge_into(GradCheckReport& into, const GradCheckReport& other) {
  const bool take = other.coords_checked > 0 &&
                    (into.coords_checked == 0 || other.max_rel_error > into.max_rel_error);
  into.coords_checked += other.coords_checked;
  into.coords_skipped += other.coords_skipped;
  if (!take) return;
  into.max_rel_error = other.max_rel_error;
  into.worst_input = other.worst_input;
  into.worst_index = other.worst_index;
  into.worst_analytic = other.worst_analytic;
  into.worst_numeric = other.worst_numeric;
}

}  // namespace mvksr
