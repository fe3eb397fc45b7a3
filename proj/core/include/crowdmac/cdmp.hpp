#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crowdmac/density.hpp"

namespace crowdmac {

// Binary density container: magic "CDMP\0\0\0\1", little-endian u32 T, H, W, then T*H*W
// little-endian f32 values in (t, row, column) order.
inline constexpr std::array<char, 8> kCdmpMagic = {'C', 'D', 'M', 'P', '\0', '\0', '\0', '\1'};

struct CdmpVolume {
  std::uint32_t frames = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;
};

void write_cdmp(const std::filesystem::path& path, const CdmpVolume& volume);
CdmpVolume read_cdmp_volume(const std::filesystem::path& path);

void write_cdmp(const std::filesystem::path& path, const DensitySequence& seq);
DensitySequence read_cdmp(const std::filesystem::path& path);

// Binary PGM (P5), maxval 255, pixel = round(clamp(density, 0, 1) * 255).
void write_pgm(const std::filesystem::path& path, const DensityFrame& frame);

}  // namespace crowdmac
