#include "crowdmac/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "crowdmac/errors.hpp"

namespace crowdmac {

DensityFrame::DensityFrame(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw ParameterError("density frame dimensions must be positive");
  values_.assign(static_cast<std::size_t>(width) * height, 0.0f);
}

double DensityFrame::total() const {
  double sum = 0.0;
  for (const float v : values_) sum += v;
  return sum;
}

DensitySequence::DensitySequence(int length, int width, int height, double interval)
    : frames(static_cast<std::size_t>(length), DensityFrame(width, height)), frame_interval(interval) {}

double DensitySequence::total() const {
  double sum = 0.0;
  for (const auto& f : frames) sum += f.total();
  return sum;
}

DensitySequence DensitySequence::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > length()) throw ParameterError("sequence slice out of range");
  DensitySequence out;
  out.frame_interval = frame_interval;
  out.frames.assign(frames.begin() + first, frames.begin() + first + count);
  return out;
}

void DensitySequence::check_shape() const {
  for (const auto& f : frames) {
    if (f.width() != width() || f.height() != height()) {
      throw ParameterError("density sequence frames differ in shape");
    }
  }
}

DensityFrame rasterize_frame(std::span<const Point2> positions, int width, int height,
                             const RasterOptions& options) {
  if (!(options.sigma > 0.0)) throw ParameterError("sigma must be positive");
  DensityFrame frame(width, height);
  if (positions.empty()) return frame;

  const double sigma = options.sigma;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  const double radius_sq = static_cast<double>(radius) * radius;
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double amplitude =
      options.convention == KernelConvention::PeakUnit ? 1.0 : 1.0 / (2.0 * std::numbers::pi * sigma * sigma);

  std::vector<double> acc(frame.size(), 0.0);
  for (const Point2& p : positions) {
    if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) {
      throw RangeError("position (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                       ") outside the " + std::to_string(width) + "x" + std::to_string(height) + " scene");
    }
    const int cx = static_cast<int>(std::lround(p.x));
    const int cy = static_cast<int>(std::lround(p.y));
    const int row_lo = std::max(0, cy - radius - 1);
    const int row_hi = std::min(height - 1, cy + radius + 1);
    const int col_lo = std::max(0, cx - radius - 1);
    const int col_hi = std::min(width - 1, cx + radius + 1);
    for (int row = row_lo; row <= row_hi; ++row) {
      const double dy = row - p.y;
      for (int col = col_lo; col <= col_hi; ++col) {
        const double dx = col - p.x;
        const double dist_sq = dx * dx + dy * dy;
        if (dist_sq > radius_sq) continue;
        acc[static_cast<std::size_t>(row) * width + col] += amplitude * std::exp(-dist_sq * inv_two_var);
      }
    }
  }
  auto values = frame.values();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    values[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
  }
  return frame;
}

DensityFrame rasterize_frame(std::span<const Point2> positions, int width, int height, double sigma) {
  return rasterize_frame(positions, width, height, RasterOptions{sigma, KernelConvention::PeakUnit});
}

DensitySequence rasterize_sequence(const TrajectoryDataset& data, FrameRange frames, int width, int height,
                                   const RasterOptions& options) {
  if (frames.count() <= 0) throw ParameterError("rasterize_sequence: empty window");
  DensitySequence seq;
  seq.frame_interval = data.frame_interval();
  seq.frames.reserve(static_cast<std::size_t>(frames.count()));
  std::vector<Point2> points;
  for (std::int64_t f = frames.first; f <= frames.last; ++f) {
    points.clear();
    for (const auto& r : data.frame(f)) points.push_back({r.x, r.y});
    seq.frames.push_back(rasterize_frame(points, width, height, options));
  }
  return seq;
}

DensitySequence rasterize_sequence(const TrajectoryWindow& window, int width, int height,
                                   const RasterOptions& options) {
  if (window.length() <= 0) throw ParameterError("rasterize_sequence: empty window");
  return rasterize_sequence(window.data, window.full_range(), width, height, options);
}

std::vector<double> normalize_map(const DensityFrame& frame, double epsilon) {
  std::vector<double> out(frame.size());
  const auto values = frame.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(values[i]) + epsilon;
    sum += out[i];
  }
  if (sum > 0.0) {
    for (double& v : out) v /= sum;
  }
  return out;
}

namespace {

void check_same_shape(const DensityFrame& a, const DensityFrame& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ParameterError("density maps differ in shape: " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()));
  }
}

double kl_normalized(const std::vector<double>& p, const std::vector<double>& q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) sum += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(0.0, sum / static_cast<double>(p.size()));
}

}  // namespace

double kl_divergence(const DensityFrame& g, const DensityFrame& c, double epsilon) {
  check_same_shape(g, c);
  return kl_normalized(normalize_map(g, epsilon), normalize_map(c, epsilon));
}

double js_divergence(const DensityFrame& g, const DensityFrame& c, double epsilon) {
  check_same_shape(g, c);
  const auto p = normalize_map(g, epsilon);
  const auto q = normalize_map(c, epsilon);
  return 0.5 * (kl_normalized(p, q) + kl_normalized(q, p));
}

MetricReport score_forecast(const DensitySequence& pred, const DensitySequence& gt, double epsilon) {
  if (pred.length() != gt.length()) {
    throw ParameterError("score_forecast: prediction has " + std::to_string(pred.length()) +
                         " steps, ground truth " + std::to_string(gt.length()));
  }
  if (pred.length() == 0) throw ParameterError("score_forecast: empty sequences");
  MetricReport report;
  report.per_step_js.reserve(pred.frames.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.frames.size(); ++t) {
    const double js = js_divergence(pred.frames[t], gt.frames[t], epsilon);
    report.per_step_js.push_back(js);
    sum += js;
  }
  report.ad_js = sum / static_cast<double>(report.per_step_js.size());
  report.fd_js = report.per_step_js.back();
  return report;
}

}  // namespace crowdmac
