#pragma once

#include "crowdmac/density.hpp"
#include "crowdmac/random.hpp"

namespace crowdmac {

struct AugmentPolicy {
  bool rotate = true;  // multiples of 90 degrees (180 only for non-square maps)
  bool hflip = true;
  bool vflip = true;
  bool scale = true;
  double scale_min = 0.8;
  double scale_max = 1.25;

  static AugmentPolicy identity() { return {false, false, false, false, 1.0, 1.0}; }
  void validate() const;
};

// Clockwise quarter turns: pixel (r, c) moves to (c, H - 1 - r) per turn.
DensityFrame rotate90(const DensityFrame& frame, int quarter_turns);
DensityFrame flip_horizontal(const DensityFrame& frame);
DensityFrame flip_vertical(const DensityFrame& frame);
// Bilinear zoom about the map center, cropped or zero-padded back to the input size.
DensityFrame rescale(const DensityFrame& frame, double factor);

// Draws one transform from `policy` and applies it identically to every frame.
DensitySequence augment(const DensitySequence& seq, Rng& rng, const AugmentPolicy& policy);

}  // namespace crowdmac
