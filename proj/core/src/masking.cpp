#include "crowdmac/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "crowdmac/cdmp.hpp"
#include "crowdmac/errors.hpp"

namespace crowdmac {

std::string_view to_string(MaskTask task) {
  switch (task) {
    case MaskTask::FuturePrediction: return "future";
    case MaskTask::PastPrediction: return "past";
    case MaskTask::Interpolation: return "interpolation";
  }
  return "?";
}

MaskTask parse_mask_task(std::string_view name) {
  for (const MaskTask t : kAllTasks) {
    if (name == to_string(t)) return t;
  }
  throw ParameterError("unknown mask task '" + std::string(name) + "'");
}

std::string_view to_string(TmFunction fn) {
  switch (fn) {
    case TmFunction::Exponential: return "exponential";
    case TmFunction::Constant: return "constant";
    case TmFunction::SquareRoot: return "sqrt";
    case TmFunction::Linear: return "linear";
    case TmFunction::Square: return "square";
    case TmFunction::Cubic: return "cubic";
  }
  return "?";
}

TmFunction parse_tm_function(std::string_view name) {
  for (const TmFunction fn : {TmFunction::Exponential, TmFunction::Constant, TmFunction::SquareRoot,
                              TmFunction::Linear, TmFunction::Square, TmFunction::Cubic}) {
    if (name == to_string(fn)) return fn;
  }
  throw ParameterError("unknown TM ratio function '" + std::string(name) + "'");
}

void TDMConfig::validate() const {
  if (!(lambda_max >= 0.0)) throw ParameterError("tdm.lambda_max must be >= 0");
  if (!(tau > 0.0)) throw ParameterError("tdm.tau must be positive");
  double sum = 0.0;
  for (const double w : task_weights) {
    if (!(w >= 0.0)) throw ParameterError("tdm.task_weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("tdm.task_weights must sum to 1");
  if (!(constant_ratio >= 0.0 && constant_ratio < 1.0)) throw ParameterError("tdm.constant_ratio must lie in [0, 1)");
}

int MaskPlan::masked_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

int MaskPlan::masked_in_slice(int r) const {
  const auto first = mask.begin() + static_cast<std::ptrdiff_t>(r) * n_spatial;
  return static_cast<int>(std::count(first, first + n_spatial, std::uint8_t{1}));
}

std::vector<int> MaskPlan::visible_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> MaskPlan::masked_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

double tm_ratio(int t, int t_max, double lambda, MaskTask task) {
  return tm_ratio(TmFunction::Exponential, t, t_max, lambda, task);
}

double tm_ratio(TmFunction fn, int t, int t_max, double lambda, MaskTask task, double constant_ratio) {
  if (t_max < 1 || t < 1 || t > t_max) {
    throw ParameterError("tm_ratio: time index " + std::to_string(t) + " outside [1, " + std::to_string(t_max) + "]");
  }
  if (!(lambda >= 0.0)) throw ParameterError("tm_ratio: lambda must be >= 0");
  // Fraction of the schedule reached at t: rises with t except for past prediction.
  const double progress = task == MaskTask::PastPrediction ? static_cast<double>(t_max - t) / t_max
                                                           : static_cast<double>(t) / t_max;
  const double peak = -std::expm1(-lambda);
  double gamma = 0.0;
  switch (fn) {
    case TmFunction::Exponential: gamma = -std::expm1(-lambda * progress); break;
    case TmFunction::Constant: gamma = constant_ratio; break;
    case TmFunction::SquareRoot: gamma = peak * std::sqrt(progress); break;
    case TmFunction::Linear: gamma = peak * progress; break;
    case TmFunction::Square: gamma = peak * progress * progress; break;
    case TmFunction::Cubic: gamma = peak * progress * progress * progress; break;
  }
  // Saturates to 1 in double only for lambda beyond ~37.
  return std::min(gamma, std::nextafter(1.0, 0.0));
}

double sample_lambda(Rng& rng, double lambda_max) {
  if (!(lambda_max >= 0.0)) throw ParameterError("lambda_max must be >= 0");
  return lambda_max * uniform01(rng);
}

std::vector<double> dm_probabilities(std::span<const double> densities, double tau) {
  if (!(tau > 0.0)) throw ParameterError("dm_probabilities: tau must be positive");
  std::vector<double> out(densities.size());
  if (densities.empty()) return out;
  const double top = *std::max_element(densities.begin(), densities.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp((densities[i] - top) / tau);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<std::uint8_t> sample_tdm_slice(std::span<const double> densities, double gamma, double tau, Rng& rng,
                                           bool density_aware) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("sample_tdm_slice: gamma must lie in [0, 1)");
  const std::size_t n = densities.size();
  std::vector<std::uint8_t> chosen(n, 0);
  const auto draws = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n)));
  if (draws == 0) return chosen;

  std::vector<double> weights = density_aware ? dm_probabilities(densities, tau) : std::vector<double>(n, 1.0);
  for (std::size_t k = 0; k < draws; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += weights[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double u = uniform01(rng) * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || weights[i] <= 0.0) continue;
        cum += weights[i];
        pick = i;
        if (u < cum) break;
      }
    }
    if (pick == n) {
      // Remaining weights underflowed: fall back to a uniform draw over unchosen tokens.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) rest.push_back(i);
      }
      pick = rest[uniform_index(rng, rest.size())];
    }
    chosen[pick] = 1;
    weights[pick] = 0.0;
  }
  return chosen;
}

std::vector<std::uint8_t> frame_mask(MaskTask task, int n_temporal, int n_spatial, int obs_slices) {
  if (n_temporal < 1 || n_spatial < 1) throw ParameterError("frame_mask: token grid must be non-empty");
  if (obs_slices < 0 || obs_slices > n_temporal) throw ParameterError("frame_mask: obs_slices outside [0, N_r]");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n_temporal) * n_spatial, 0);
  for (int r = 0; r < n_temporal; ++r) {
    const bool masked = (task == MaskTask::FuturePrediction && r >= obs_slices) ||
                        (task == MaskTask::PastPrediction && r < obs_slices);
    if (masked) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r) * n_spatial, n_spatial, std::uint8_t{1});
  }
  return mask;
}

namespace {

MaskPlan compose_plan(MaskTask task, const DensityTable& table, const TDMConfig& cfg, double lambda, int obs_slices,
                      Rng& rng) {
  const int n_r = table.n_temporal;
  const int n_s = table.n_spatial;
  MaskPlan plan{n_r, n_s, frame_mask(task, n_r, n_s, obs_slices), task, lambda};

  int first = 0;
  int last = n_r;  // exclusive
  if (task == MaskTask::FuturePrediction) last = obs_slices;
  if (task == MaskTask::PastPrediction) first = obs_slices;
  const int t_max = last - first;
  for (int r = first; r < last; ++r) {
    const double gamma = tm_ratio(cfg.tm_function, r - first + 1, t_max, lambda, task, cfg.constant_ratio);
    const auto slice = sample_tdm_slice(table.slice(r), gamma, cfg.tau, rng, cfg.dm_enabled);
    std::copy(slice.begin(), slice.end(), plan.mask.begin() + static_cast<std::ptrdiff_t>(r) * n_s);
  }
  return plan;
}

bool degenerate(const MaskPlan& plan) {
  const int masked = plan.masked_count();
  return masked == 0 || masked == static_cast<int>(plan.mask.size());
}

}  // namespace

MaskPlan build_mask_plan(MaskTask task, const DensityTable& table, const TDMConfig& cfg, double lambda,
                         int obs_slices, Rng& rng) {
  if (table.n_temporal < 1 || table.n_spatial < 1 ||
      table.d.size() != static_cast<std::size_t>(table.n_temporal) * table.n_spatial) {
    throw ParameterError("build_mask_plan: malformed density table");
  }
  if (obs_slices < 0 || obs_slices > table.n_temporal) throw ParameterError("build_mask_plan: obs_slices outside [0, N_r]");

  MaskPlan plan = compose_plan(task, table, cfg, lambda, obs_slices, rng);
  if (!degenerate(plan)) return plan;
  plan = compose_plan(task, table, cfg, sample_lambda(rng, cfg.lambda_max), obs_slices, rng);
  if (!degenerate(plan)) return plan;
  throw DegenerateMaskError(std::string("mask plan for task '") + std::string(to_string(task)) + "' masks " +
                            (plan.masked_count() == 0 ? "no tokens" : "every token"));
}

MaskPlan inference_mask(int n_temporal, int n_spatial, int obs_slices) {
  MaskPlan plan{n_temporal, n_spatial, frame_mask(MaskTask::FuturePrediction, n_temporal, n_spatial, obs_slices),
                MaskTask::FuturePrediction, 0.0};
  if (degenerate(plan)) throw DegenerateMaskError("inference mask has no visible or no masked tokens");
  return plan;
}

MaskTask sample_task(Rng& rng, const std::array<double, 3>& task_weights) {
  const double total = std::accumulate(task_weights.begin(), task_weights.end(), 0.0);
  if (!(total > 0.0)) throw ParameterError("task weights must have positive mass");
  const double u = uniform01(rng) * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < task_weights.size(); ++i) {
    if (task_weights[i] <= 0.0) continue;
    cum += task_weights[i];
    last_positive = i;
    if (u < cum) return kAllTasks[i];
  }
  return kAllTasks[last_positive];
}

void write_mask_sidecar(const std::filesystem::path& path, const MaskPlan& plan, const CubeGrid& grid) {
  if (plan.n_temporal != grid.n_temporal() || plan.n_spatial != grid.n_spatial()) {
    throw ParameterError("mask plan does not match the cube grid");
  }
  CdmpVolume vol;
  vol.frames = static_cast<std::uint32_t>(grid.n_temporal());
  vol.height = static_cast<std::uint32_t>(grid.blocks_y());
  vol.width = static_cast<std::uint32_t>(grid.blocks_x());
  vol.values.reserve(plan.mask.size());
  for (const auto m : plan.mask) vol.values.push_back(m ? 1.0f : 0.0f);
  write_cdmp(path, vol);
}

}  // namespace crowdmac
