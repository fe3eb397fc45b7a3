#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "crowdmac/model.hpp"

namespace crowdmac {

struct GradCheckEntry {
  std::string label;  // "tensor[index]" for model checks
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
  std::vector<GradCheckEntry> worst;  // descending rel_error

  // One line per worst entry, for failure messages.
  std::string describe() const;
};

struct GradCheckOptions {
  std::size_t n_params = 200;
  // Outer step of the extrapolated central difference. Model gradients are small, so much
  // below 1e-3 roundoff in the loss dominates.
  double h = 2e-3;
  // rel = |a - n| / max(|a|, |n|, abs_floor); keeps near-zero gradients from dominating.
  double abs_floor = 1e-8;
  std::size_t keep_worst = 10;
  std::uint64_t seed = 0;
};

double grad_rel_error(double analytic, double numeric, double abs_floor);

// Richardson-extrapolated central differences of f at x for the given coordinates, compared with analytic[i].
GradCheckReport check_gradient(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                               std::span<const double> analytic, std::span<const std::size_t> indices,
                               double tolerance, const GradCheckOptions& options = {});

// Masked-MSE gradient of the model in 64-bit arithmetic on options.n_params sampled
// parameters (every tensor contributes at least one). A tolerance of infinity always passes.
GradCheckReport grad_check(const ModelState& state, const TokenField& sample, const MaskPlan& plan,
                           double tolerance = 1e-4, const GradCheckOptions& options = {});

}  // namespace crowdmac
