#pragma once

#include <span>
#include <vector>

#include "crowdmac/simdata.hpp"

namespace crowdmac {

inline constexpr double kDefaultSigma = 3.0;
inline constexpr double kDefaultEpsilon = 1e-12;

// One W x H crowd density map, row-major, values in [0, 1].
class DensityFrame {
 public:
  DensityFrame() = default;
  DensityFrame(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  float& at(int row, int col) { return values_[static_cast<std::size_t>(row) * width_ + col]; }
  float at(int row, int col) const { return values_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  double total() const;

  friend bool operator==(const DensityFrame&, const DensityFrame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
};

struct DensitySequence {
  std::vector<DensityFrame> frames;
  double frame_interval = 0.4;

  DensitySequence() = default;
  DensitySequence(int length, int width, int height, double interval = 0.4);

  int length() const { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  double total() const;

  // Frames [first, first + count) as a new sequence.
  DensitySequence slice(int first, int count) const;

  // Throws ParameterError unless every frame shares the first frame's shape.
  void check_shape() const;

  friend bool operator==(const DensitySequence& a, const DensitySequence& b) { return a.frames == b.frames; }
};

struct Point2 {
  double x = 0.0;  // column
  double y = 0.0;  // row
};

// Peak-unit kernels saturate at 1 for a lone pedestrian; unit-mass kernels integrate to 1.
enum class KernelConvention { PeakUnit, UnitMass };

struct RasterOptions {
  double sigma = kDefaultSigma;
  KernelConvention convention = KernelConvention::PeakUnit;
};

// Gaussian splat per pedestrian, truncated at radius ceil(4 sigma), then clamped to [0, 1].
DensityFrame rasterize_frame(std::span<const Point2> positions, int width, int height,
                             const RasterOptions& options = {});
DensityFrame rasterize_frame(std::span<const Point2> positions, int width, int height, double sigma);

// Frame t of the result holds exactly the agents recorded at window.start_frame + t.
DensitySequence rasterize_sequence(const TrajectoryWindow& window, int width, int height,
                                   const RasterOptions& options = {});
DensitySequence rasterize_sequence(const TrajectoryDataset& data, FrameRange frames, int width, int height,
                                   const RasterOptions& options = {});

// (v + epsilon) / sum(v + epsilon), accumulated in double.
std::vector<double> normalize_map(const DensityFrame& frame, double epsilon = kDefaultEpsilon);

// (1 / WH) * sum g log(g / c) over the epsilon-normalized maps.
double kl_divergence(const DensityFrame& g, const DensityFrame& c, double epsilon = kDefaultEpsilon);

// Symmetrized KL: (KL(g||c) + KL(c||g)) / 2.
double js_divergence(const DensityFrame& g, const DensityFrame& c, double epsilon = kDefaultEpsilon);

struct MetricReport {
  std::vector<double> per_step_js;
  double ad_js = 0.0;
  double fd_js = 0.0;
};

MetricReport score_forecast(const DensitySequence& pred, const DensitySequence& gt,
                            double epsilon = kDefaultEpsilon);

}  // namespace crowdmac
