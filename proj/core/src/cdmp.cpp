#include "crowdmac/cdmp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "crowdmac/errors.hpp"

namespace crowdmac {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw std::runtime_error("truncated CDMP header");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

void write_cdmp(const std::filesystem::path& path, const CdmpVolume& volume) {
  const std::size_t expected = static_cast<std::size_t>(volume.frames) * volume.height * volume.width;
  if (volume.values.size() != expected) throw ParameterError("CDMP volume size does not match T*H*W");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCdmpMagic.data(), kCdmpMagic.size());
  put_u32(out, volume.frames);
  put_u32(out, volume.height);
  put_u32(out, volume.width);
  for (const float v : volume.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

CdmpVolume read_cdmp_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCdmpMagic) {
    throw std::runtime_error(path.string() + " is not a CDMP file");
  }
  CdmpVolume vol;
  vol.frames = get_u32(in);
  vol.height = get_u32(in);
  vol.width = get_u32(in);
  const std::size_t count = static_cast<std::size_t>(vol.frames) * vol.height * vol.width;
  vol.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    vol.values[i] = std::bit_cast<float>(get_u32(in));
  }
  return vol;
}

void write_cdmp(const std::filesystem::path& path, const DensitySequence& seq) {
  seq.check_shape();
  CdmpVolume vol;
  vol.frames = static_cast<std::uint32_t>(seq.length());
  vol.height = static_cast<std::uint32_t>(seq.height());
  vol.width = static_cast<std::uint32_t>(seq.width());
  vol.values.reserve(static_cast<std::size_t>(vol.frames) * vol.height * vol.width);
  for (const auto& f : seq.frames) {
    const auto v = f.values();
    vol.values.insert(vol.values.end(), v.begin(), v.end());
  }
  write_cdmp(path, vol);
}

DensitySequence read_cdmp(const std::filesystem::path& path) {
  const CdmpVolume vol = read_cdmp_volume(path);
  DensitySequence seq(static_cast<int>(vol.frames), static_cast<int>(vol.width), static_cast<int>(vol.height));
  const std::size_t plane = static_cast<std::size_t>(vol.height) * vol.width;
  for (std::uint32_t t = 0; t < vol.frames; ++t) {
    std::copy_n(vol.values.begin() + static_cast<std::ptrdiff_t>(t * plane), plane, seq.frames[t].values().begin());
  }
  return seq;
}

void write_pgm(const std::filesystem::path& path, const DensityFrame& frame) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  std::vector<unsigned char> pixels(frame.size());
  const auto values = frame.values();
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(values[i]), 0.0, 1.0);
    pixels[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace crowdmac
