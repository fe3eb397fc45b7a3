#pragma once

#include <span>
#include <vector>

#include "crowdmac/density.hpp"

namespace crowdmac {

// Space-time cube partition of a frames x height x width volume. Token (r, s) covers frames
// [r*cube_t, (r+1)*cube_t) and spatial block s, counted row-major over the block grid.
struct CubeGrid {
  int frames = 20;
  int height = 80;
  int width = 80;
  int cube_t = 4;
  int cube_h = 8;
  int cube_w = 8;

  // Throws ParameterError naming the first axis whose cube size does not divide it.
  void validate() const;

  int blocks_y() const { return height / cube_h; }
  int blocks_x() const { return width / cube_w; }
  int n_spatial() const { return blocks_y() * blocks_x(); }
  int n_temporal() const { return frames / cube_t; }
  int n_tokens() const { return n_spatial() * n_temporal(); }
  int token_len() const { return cube_t * cube_h * cube_w; }
  int token_index(int r, int s) const { return r * n_spatial() + s; }

  friend bool operator==(const CubeGrid&, const CubeGrid&) = default;
};

// n_tokens x token_len values; within a token, values run (frame, row, column) row-major.
struct TokenField {
  CubeGrid grid;
  std::vector<float> values;

  std::span<float> token(int index) {
    return {values.data() + static_cast<std::size_t>(index) * grid.token_len(), static_cast<std::size_t>(grid.token_len())};
  }
  std::span<const float> token(int index) const {
    return {values.data() + static_cast<std::size_t>(index) * grid.token_len(), static_cast<std::size_t>(grid.token_len())};
  }

  friend bool operator==(const TokenField&, const TokenField&) = default;
};

// Accumulated density per token: d[r][s] = sum of the token's pixel values.
struct DensityTable {
  int n_temporal = 0;
  int n_spatial = 0;
  std::vector<double> d;

  double at(int r, int s) const { return d[static_cast<std::size_t>(r) * n_spatial + s]; }
  std::span<const double> slice(int r) const {
    return {d.data() + static_cast<std::size_t>(r) * n_spatial, static_cast<std::size_t>(n_spatial)};
  }
  double total() const;
};

// Builds the grid matching a sequence's shape with the given cube sizes.
CubeGrid grid_for(const DensitySequence& seq, int cube_t, int cube_h, int cube_w);

TokenField cubify(const DensitySequence& seq, const CubeGrid& grid);

// Inverse of cubify. `clamp` restricts values to [0, 1], for model output only.
DensitySequence decubify(const TokenField& tokens, bool clamp = false);

DensityTable accumulated_density(const DensitySequence& seq, const CubeGrid& grid);

}  // namespace crowdmac
