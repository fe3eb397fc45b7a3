#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdmac/random.hpp"
#include "crowdmac/tokenizer.hpp"

namespace crowdmac {

enum class MaskTask { FuturePrediction = 0, PastPrediction = 1, Interpolation = 2 };

inline constexpr std::array<MaskTask, 3> kAllTasks = {MaskTask::FuturePrediction, MaskTask::PastPrediction,
                                                      MaskTask::Interpolation};

std::string_view to_string(MaskTask task);
MaskTask parse_mask_task(std::string_view name);

// Shape of the temporal-aware masking ratio. Exponential is the default schedule; the others
// exist for ablations and share its endpoint 1 - exp(-lambda) at the most-masked slice.
enum class TmFunction { Exponential, Constant, SquareRoot, Linear, Square, Cubic };

std::string_view to_string(TmFunction fn);
TmFunction parse_tm_function(std::string_view name);

struct TDMConfig {
  double lambda_max = 9.0;
  double tau = 500.0;
  // Sampling weights, indexed by MaskTask.
  std::array<double, 3> task_weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  TmFunction tm_function = TmFunction::Exponential;
  double constant_ratio = 0.5;
  // Density-aware token choice; uniform choice when false.
  bool dm_enabled = true;
  // Draw lambda for every batch instead of once per epoch.
  bool lambda_per_batch = false;

  void validate() const;
};

struct MaskPlan {
  int n_temporal = 0;
  int n_spatial = 0;
  std::vector<std::uint8_t> mask;  // 1 = masked, indexed r * n_spatial + s
  MaskTask task = MaskTask::FuturePrediction;
  double lambda_used = 0.0;

  bool masked(int r, int s) const { return mask[static_cast<std::size_t>(r) * n_spatial + s] != 0; }
  int masked_count() const;
  int visible_count() const { return static_cast<int>(mask.size()) - masked_count(); }
  int masked_in_slice(int r) const;
  std::vector<int> visible_indices() const;
  std::vector<int> masked_indices() const;

  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

// gamma(t) = 1 - exp(-lambda t / T_max) for future prediction and interpolation;
// gamma(t) = 1 - exp(-lambda (T_max - t) / T_max) for past prediction. t is 1-based.
double tm_ratio(int t, int t_max, double lambda, MaskTask task);

double tm_ratio(TmFunction fn, int t, int t_max, double lambda, MaskTask task, double constant_ratio = 0.5);

// Uniform draw from [0, lambda_max].
double sample_lambda(Rng& rng, double lambda_max);

// Softmax(d / tau), max-subtracted.
std::vector<double> dm_probabilities(std::span<const double> densities, double tau);

// Masks exactly floor(gamma * N_s) distinct tokens of one temporal slice by sequential
// weighted draws without replacement.
std::vector<std::uint8_t> sample_tdm_slice(std::span<const double> densities, double gamma, double tau, Rng& rng,
                                           bool density_aware = true);

// Whole-slice masking: future slices for FuturePrediction, observation slices for
// PastPrediction, nothing for Interpolation.
std::vector<std::uint8_t> frame_mask(MaskTask task, int n_temporal, int n_spatial, int obs_slices);

// Frame mask plus TDM on the opposite side. A plan that would mask nothing or everything is
// retried once with a freshly sampled lambda, then rejected with DegenerateMaskError.
MaskPlan build_mask_plan(MaskTask task, const DensityTable& table, const TDMConfig& cfg, double lambda,
                         int obs_slices, Rng& rng);

// Future slices masked, observations fully visible.
MaskPlan inference_mask(int n_temporal, int n_spatial, int obs_slices);

MaskTask sample_task(Rng& rng, const std::array<double, 3>& task_weights);

// Mask plan as a CDMP volume of 0/1 values shaped (N_r, blocks_y, blocks_x).
void write_mask_sidecar(const std::filesystem::path& path, const MaskPlan& plan, const CubeGrid& grid);

}  // namespace crowdmac
