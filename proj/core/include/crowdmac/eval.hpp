#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdmac/density.hpp"
#include "crowdmac/masking.hpp"
#include "crowdmac/model.hpp"
#include "crowdmac/simdata.hpp"
#include "crowdmac/train.hpp"

namespace crowdmac {

struct EvalProtocol {
  int obs_frames = 8;
  int pred_frames = 12;
  int width = 80;
  int height = 80;
  RasterOptions raster;
  double epsilon = kDefaultEpsilon;
  // 0 evaluates on ground-truth observations; otherwise observations are corrupted.
  double miss_ratio = 0.0;
  bool whole_track = false;
  // Window i is corrupted with derive_seed(seed, i), independent of miss_ratio.
  std::uint64_t seed = 0;

  void validate() const;
};

// Observed frames in, forecast frames out.
using Forecaster = std::function<DensitySequence(const DensitySequence& observed)>;

struct EvalSample {
  DensitySequence observed;  // possibly corrupted
  DensitySequence future;    // always clean
};

// Rasterizes every window under the protocol. Throws ProtocolError on zero windows and
// ParameterError on a window whose horizons differ from the protocol.
std::vector<EvalSample> prepare_samples(std::span<const TrajectoryWindow> windows, const EvalProtocol& protocol);

struct EvalResult {
  MetricReport aggregate;  // ad_js, fd_js and per_step_js averaged over windows
  std::vector<MetricReport> per_window;
};

// Calls `forecaster` once per sample, in order.
EvalResult evaluate(const Forecaster& forecaster, std::span<const EvalSample> samples, double epsilon = kDefaultEpsilon);
EvalResult evaluate(const Forecaster& forecaster, std::span<const TrajectoryWindow> windows,
                    const EvalProtocol& protocol);
EvalResult evaluate(const ModelState& state, std::span<const TrajectoryWindow> windows, const EvalProtocol& protocol);

// The forecaster keeps its own copy of the state.
Forecaster model_forecaster(const ModelState& state);

// Repeats the last observed frame pred_frames times.
DensitySequence persistence_baseline(const DensitySequence& observed, int pred_frames = 12);
Forecaster persistence_forecaster(int pred_frames = 12);

struct RobustnessPoint {
  double miss_ratio = 0.0;
  double ad_js = 0.0;
  double fd_js = 0.0;
};

std::vector<RobustnessPoint> robustness_sweep(const Forecaster& forecaster, std::span<const TrajectoryWindow> windows,
                                              const EvalProtocol& protocol, std::span<const double> ratios);

void write_robustness_csv(const std::filesystem::path& path, std::span<const RobustnessPoint> curve);

// Shared budget for every ablation cell; only the masking configuration varies.
struct AblationSetup {
  std::vector<DensitySequence> train_set;
  std::vector<TrajectoryWindow> test_windows;
  ModelConfig model;
  TrainConfig train;
  TDMConfig tdm;
  EvalProtocol protocol;
};

struct AblationCell {
  std::string id;
  TDMConfig tdm;
};

struct AblationRow {
  std::string cell_id;
  std::string config_json;
  double ad_js = 0.0;
  double fd_js = 0.0;
  double train_seconds = 0.0;
  // Published counterpart of the row, printed for context only.
  std::optional<std::pair<double, double>> reference;
};

using CellCallback = std::function<void(const AblationRow&)>;

// Trains one model per cell from the same seed and evaluates it on the test windows.
std::vector<AblationRow> run_ablation(const AblationSetup& setup, std::span<const AblationCell> cells,
                                      const CellCallback& on_cell = {});

// Constant, square root, linear, square, cubic, exponential.
std::vector<TmFunction> default_tm_grid();
std::vector<AblationRow> ablate_tm_functions(const AblationSetup& setup, std::span<const TmFunction> functions,
                                             const CellCallback& on_cell = {});

// future; future + interpolation; future + past; all three.
std::vector<std::vector<MaskTask>> default_task_combos();
// Throws ProtocolError for a combo without FuturePrediction.
std::vector<AblationRow> ablate_multitask(const AblationSetup& setup, std::span<const std::vector<MaskTask>> combos,
                                          const CellCallback& on_cell = {});

// Uniform weights over the listed tasks.
std::array<double, 3> task_weights_for(std::span<const MaskTask> combo);

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);

// Human-readable table with a reference column where one exists.
std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace crowdmac
