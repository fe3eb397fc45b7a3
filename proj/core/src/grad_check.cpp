#include "crowdmac/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "crowdmac/errors.hpp"
#include "crowdmac/random.hpp"

namespace crowdmac {

std::string GradCheckReport::describe() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "checked %zu, max rel error %.3e (tolerance %.3e)\n", checked, max_rel_error,
                tolerance);
  out += line;
  for (const auto& e : worst) {
    std::snprintf(line, sizeof line, "  %s analytic %.10e numeric %.10e rel %.3e\n", e.label.c_str(), e.analytic,
                  e.numeric, e.rel_error);
    out += line;
  }
  return out;
}

double grad_rel_error(double analytic, double numeric, double abs_floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

// Central difference with one Richardson step: (4 D(h/2) - D(h)) / 3 cancels the h^2 term,
// so h can stay large enough that roundoff in f does not dominate.
double extrapolated_difference(const std::function<double(double)>& at_offset, double h) {
  const auto central = [&](double step) { return (at_offset(step) - at_offset(-step)) / (2.0 * step); };
  return (4.0 * central(0.5 * h) - central(h)) / 3.0;
}

void finish(GradCheckReport& report, std::vector<GradCheckEntry> entries, std::size_t keep) {
  for (auto& e : entries) {
    if (std::isnan(e.rel_error)) e.rel_error = std::numeric_limits<double>::infinity();
  }
  std::sort(entries.begin(), entries.end(),
            [](const GradCheckEntry& a, const GradCheckEntry& b) { return a.rel_error > b.rel_error; });
  report.checked = entries.size();
  report.max_rel_error = entries.empty() ? 0.0 : entries.front().rel_error;
  report.passed = std::isinf(report.tolerance) || report.max_rel_error <= report.tolerance;
  if (entries.size() > keep) entries.resize(keep);
  report.worst = std::move(entries);
}

}  // namespace

GradCheckReport check_gradient(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                               std::span<const double> analytic, std::span<const std::size_t> indices,
                               double tolerance, const GradCheckOptions& options) {
  if (analytic.size() != x.size()) throw ParameterError("check_gradient: analytic gradient size mismatch");
  if (!(options.h > 0.0)) throw ParameterError("check_gradient: h must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<GradCheckEntry> entries;
  for (const std::size_t i : indices) {
    if (i >= point.size()) throw RangeError("check_gradient: index out of range");
    const double saved = point[i];
    const double numeric = extrapolated_difference(
        [&](double offset) {
          point[i] = saved + offset;
          return f(point);
        },
        options.h);
    point[i] = saved;
    entries.push_back({"x[" + std::to_string(i) + "]", i, analytic[i], numeric,
                       grad_rel_error(analytic[i], numeric, options.abs_floor)});
  }
  GradCheckReport report;
  report.tolerance = tolerance;
  finish(report, std::move(entries), options.keep_worst);
  return report;
}

GradCheckReport grad_check(const ModelState& state, const TokenField& sample, const MaskPlan& plan, double tolerance,
                           const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw ParameterError("grad_check: h must be positive");
  BasicParameterSet<double> params = state.params.cast<double>();
  BasicParameterSet<double> grads = params.zeros_like();
  loss_and_gradient(state.config, params, sample, plan, &grads);

  // Every tensor gets one coordinate first, then the rest are uniform over all coordinates.
  Rng rng(options.seed);
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    picks.emplace_back(t, uniform_index(rng, params.tensors[t].size()));
  }
  std::vector<std::size_t> offsets(params.tensors.size() + 1, 0);
  for (std::size_t t = 0; t < params.tensors.size(); ++t) offsets[t + 1] = offsets[t] + params.tensors[t].size();
  while (picks.size() < options.n_params && picks.size() < offsets.back()) {
    const std::size_t flat = uniform_index(rng, offsets.back());
    const std::size_t t = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                                   offsets.begin()) - 1;
    const std::pair<std::size_t, std::size_t> pick{t, flat - offsets[t]};
    if (std::find(picks.begin(), picks.end(), pick) == picks.end()) picks.push_back(pick);
  }

  std::vector<GradCheckEntry> entries;
  for (const auto& [t, i] : picks) {
    double& p = params.tensors[t].data[i];
    const double saved = p;
    const double numeric = extrapolated_difference(
        [&](double offset) {
          p = saved + offset;
          return loss_and_gradient(state.config, params, sample, plan, nullptr);
        },
        options.h);
    p = saved;
    const double analytic = grads.tensors[t].data[i];
    entries.push_back({params.tensors[t].name + "[" + std::to_string(i) + "]", offsets[t] + i, analytic, numeric,
                       grad_rel_error(analytic, numeric, options.abs_floor)});
  }
  GradCheckReport report;
  report.tolerance = tolerance;
  finish(report, std::move(entries), options.keep_worst);
  return report;
}

}  // namespace crowdmac
