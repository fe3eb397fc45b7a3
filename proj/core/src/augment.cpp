#include "crowdmac/augment.hpp"

#include <algorithm>
#include <cmath>

#include "crowdmac/errors.hpp"

namespace crowdmac {

void AugmentPolicy::validate() const {
  if (scale && !(scale_min > 0.0 && scale_min <= scale_max)) {
    throw ParameterError("augment: scale range must satisfy 0 < scale_min <= scale_max");
  }
}

DensityFrame rotate90(const DensityFrame& frame, int quarter_turns) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return frame;
  DensityFrame cur = frame;
  for (int k = 0; k < turns; ++k) {
    const int h = cur.height();
    const int w = cur.width();
    DensityFrame out(h, w);  // width = old height
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) out.at(c, h - 1 - r) = cur.at(r, c);
    }
    cur = std::move(out);
  }
  return cur;
}

DensityFrame flip_horizontal(const DensityFrame& frame) {
  DensityFrame out(frame.width(), frame.height());
  for (int r = 0; r < frame.height(); ++r) {
    for (int c = 0; c < frame.width(); ++c) out.at(r, frame.width() - 1 - c) = frame.at(r, c);
  }
  return out;
}

DensityFrame flip_vertical(const DensityFrame& frame) {
  DensityFrame out(frame.width(), frame.height());
  for (int r = 0; r < frame.height(); ++r) {
    for (int c = 0; c < frame.width(); ++c) out.at(frame.height() - 1 - r, c) = frame.at(r, c);
  }
  return out;
}

DensityFrame rescale(const DensityFrame& frame, double factor) {
  if (!(factor > 0.0)) throw ParameterError("rescale: factor must be positive");
  const int h = frame.height();
  const int w = frame.width();
  DensityFrame out(w, h);
  const double cy = 0.5 * (h - 1);
  const double cx = 0.5 * (w - 1);
  const auto sample = [&](int r, int c) -> double {
    return (r < 0 || r >= h || c < 0 || c >= w) ? 0.0 : frame.at(r, c);
  };
  for (int r = 0; r < h; ++r) {
    const double sy = (r - cy) / factor + cy;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    for (int c = 0; c < w; ++c) {
      const double sx = (c - cx) / factor + cx;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      const double v = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                       fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
      out.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

DensitySequence augment(const DensitySequence& seq, Rng& rng, const AugmentPolicy& policy) {
  policy.validate();
  int turns = 0;
  if (policy.rotate) {
    turns = static_cast<int>(uniform_index(rng, 4));
    if (seq.width() != seq.height()) turns = (turns % 2) * 2;
  }
  const bool hflip = policy.hflip && uniform01(rng) < 0.5;
  const bool vflip = policy.vflip && uniform01(rng) < 0.5;
  const double factor =
      policy.scale ? policy.scale_min + (policy.scale_max - policy.scale_min) * uniform01(rng) : 1.0;

  if (turns == 0 && !hflip && !vflip && factor == 1.0) return seq;
  DensitySequence out;
  out.frame_interval = seq.frame_interval;
  out.frames.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    DensityFrame g = rotate90(f, turns);
    if (hflip) g = flip_horizontal(g);
    if (vflip) g = flip_vertical(g);
    if (factor != 1.0) g = rescale(g, factor);
    out.frames.push_back(std::move(g));
  }
  return out;
}

}  // namespace crowdmac
