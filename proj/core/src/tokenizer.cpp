#include "crowdmac/tokenizer.hpp"

#include <algorithm>
#include <string>

#include "crowdmac/errors.hpp"

namespace crowdmac {

namespace {

void check_axis(const char* axis, int extent, int cube) {
  if (extent <= 0 || cube <= 0) {
    throw ParameterError(std::string("cube grid: ") + axis + " extent and cube size must be positive");
  }
  if (extent % cube != 0) {
    throw ParameterError(std::string("cube grid: ") + axis + " extent " + std::to_string(extent) +
                         " is not divisible by cube size " + std::to_string(cube));
  }
}

void check_sequence(const DensitySequence& seq, const CubeGrid& grid) {
  grid.validate();
  seq.check_shape();
  if (seq.length() != grid.frames || seq.height() != grid.height || seq.width() != grid.width) {
    throw ParameterError("sequence shape " + std::to_string(seq.length()) + "x" + std::to_string(seq.height()) +
                         "x" + std::to_string(seq.width()) + " does not match the cube grid");
  }
}

// Visits every pixel of token (r, s) in token order: fn(frame, row, col, offset_in_token).
template <class Fn>
void for_each_token_pixel(const CubeGrid& g, int r, int s, Fn&& fn) {
  const int by = s / g.blocks_x();
  const int bx = s % g.blocks_x();
  int k = 0;
  for (int dt = 0; dt < g.cube_t; ++dt) {
    for (int dy = 0; dy < g.cube_h; ++dy) {
      for (int dx = 0; dx < g.cube_w; ++dx) {
        fn(r * g.cube_t + dt, by * g.cube_h + dy, bx * g.cube_w + dx, k++);
      }
    }
  }
}

}  // namespace

void CubeGrid::validate() const {
  check_axis("time", frames, cube_t);
  check_axis("height", height, cube_h);
  check_axis("width", width, cube_w);
}

double DensityTable::total() const {
  double sum = 0.0;
  for (const double v : d) sum += v;
  return sum;
}

CubeGrid grid_for(const DensitySequence& seq, int cube_t, int cube_h, int cube_w) {
  CubeGrid g{seq.length(), seq.height(), seq.width(), cube_t, cube_h, cube_w};
  g.validate();
  return g;
}

TokenField cubify(const DensitySequence& seq, const CubeGrid& grid) {
  check_sequence(seq, grid);
  TokenField out{grid, std::vector<float>(static_cast<std::size_t>(grid.n_tokens()) * grid.token_len())};
  for (int r = 0; r < grid.n_temporal(); ++r) {
    for (int s = 0; s < grid.n_spatial(); ++s) {
      auto dst = out.token(grid.token_index(r, s));
      for_each_token_pixel(grid, r, s, [&](int t, int row, int col, int k) { dst[k] = seq.frames[t].at(row, col); });
    }
  }
  return out;
}

DensitySequence decubify(const TokenField& tokens, bool clamp) {
  const CubeGrid& grid = tokens.grid;
  grid.validate();
  if (tokens.values.size() != static_cast<std::size_t>(grid.n_tokens()) * grid.token_len()) {
    throw ParameterError("token field holds " + std::to_string(tokens.values.size()) + " values, grid expects " +
                         std::to_string(grid.n_tokens() * grid.token_len()));
  }
  DensitySequence seq(grid.frames, grid.width, grid.height);
  for (int r = 0; r < grid.n_temporal(); ++r) {
    for (int s = 0; s < grid.n_spatial(); ++s) {
      const auto src = tokens.token(grid.token_index(r, s));
      for_each_token_pixel(grid, r, s, [&](int t, int row, int col, int k) {
        seq.frames[t].at(row, col) = clamp ? std::clamp(src[k], 0.0f, 1.0f) : src[k];
      });
    }
  }
  return seq;
}

DensityTable accumulated_density(const DensitySequence& seq, const CubeGrid& grid) {
  check_sequence(seq, grid);
  DensityTable table{grid.n_temporal(), grid.n_spatial(),
                     std::vector<double>(static_cast<std::size_t>(grid.n_tokens()), 0.0)};
  for (int r = 0; r < grid.n_temporal(); ++r) {
    for (int s = 0; s < grid.n_spatial(); ++s) {
      double sum = 0.0;
      for_each_token_pixel(grid, r, s, [&](int t, int row, int col, int) { sum += seq.frames[t].at(row, col); });
      table.d[static_cast<std::size_t>(grid.token_index(r, s))] = sum;
    }
  }
  return table;
}

}  // namespace crowdmac
