// SPDX-License-Identifier: Apache-2.0
//
// The finite-difference suite behind `mvksr gradcheck`: every tensor op,
// the network blocks, one end-to-end model check and every loss.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvksr/grad_check.hpp"

namespace mvksr {

struct GradSuiteOptions {
  /// Coordinates sampled per tensor in the end-to-end check (0 = all).
  std::size_t model_coords_per_input = 3;
  bool include_model = true;
  std::uint64_t seed = 2024;
};

struct GradSuiteCase {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Runs in 64-bit precision regardless of the global setting. `on_case` is
/// called as each case finishes.
std::vector<GradSuiteCase> run_grad_suite(
    const GradSuiteOptions& options = {},
    const std::function<void(const GradSuiteCase&)>& on_case = {});

}  // namespace mvksr
