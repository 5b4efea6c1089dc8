// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checker.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvksr/tensor.hpp"

namespace mvksr {

struct GradCheckOptions {
  double step = 1e-5;
  /// Relative error denominator is max(|analytic|, |numeric|, abs_floor).
  double abs_floor = 1e-6;
  /// Coordinates checked per input; 0 checks all of them.
  std::size_t max_coords_per_input = 0;
  /// Skip coordinates with |x| <= 2*step (kinks of prelu/abs at zero).
  bool avoid_zero = false;
  std::uint64_t seed = 7;
  std::vector<std::string> names;  // optional labels for the report
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_input;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  std::size_t coords_skipped = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares backward() against central differences of `fn` with respect to
/// every tensor in `inputs` (perturbed in place and restored). A non-scalar
/// output is reduced by a fixed seeded random projection first. A failing
/// check is reported, never thrown.
GradCheckReport grad_check(const std::function<Tensor()>& fn, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

/// Merges reports, keeping the worst entry.
void merge_into(GradCheckReport& into, const GradCheckReport& other);

}  // namespace mvksr
