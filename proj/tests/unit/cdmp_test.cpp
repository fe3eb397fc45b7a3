#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "crowdmac/cdmp.hpp"
#include "test_support.hpp"

namespace crowdmac {
namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Cdmp, RoundTripIsExact) {
  testing::TempDir dir;
  Rng rng(1);
  const DensitySequence seq = testing::random_sequence(rng, 5, 7, 3);
  write_cdmp(dir / "a.cdmp", seq);
  const DensitySequence back = read_cdmp(dir / "a.cdmp");
  EXPECT_EQ(back, seq);
  EXPECT_EQ(back.width(), 7);
  EXPECT_EQ(back.height(), 3);
}

TEST(Cdmp, HeaderLayout) {
  testing::TempDir dir;
  DensitySequence seq(2, 3, 4);
  seq.frames[1].at(3, 2) = 1.0f;
  write_cdmp(dir / "h.cdmp", seq);
  const auto b = read_bytes(dir / "h.cdmp");
  ASSERT_EQ(b.size(), 8u + 12u + 4u * 2 * 3 * 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "CDMP");
  EXPECT_EQ(b[4], 0);
  EXPECT_EQ(b[7], 1);
  EXPECT_EQ(b[8], 2);   // T
  EXPECT_EQ(b[12], 4);  // H
  EXPECT_EQ(b[16], 3);  // W
  // Last value is (t=1, row=3, col=2) = 1.0f = 0x3f800000 little-endian.
  EXPECT_EQ(b[b.size() - 1], 0x3f);
  EXPECT_EQ(b[b.size() - 2], 0x80);
}

TEST(Cdmp, BadMagicIsRejected) {
  testing::TempDir dir;
  std::ofstream(dir / "x.cdmp") << "NOTCDMP0000000000000";
  EXPECT_ANY_THROW(read_cdmp(dir / "x.cdmp"));
}

TEST(Pgm, HeaderAndScaling) {
  testing::TempDir dir;
  DensityFrame f(5, 2);
  f.at(0, 0) = 1.0f;
  f.at(1, 4) = 0.5f;
  f.at(0, 1) = 2.0f;
  write_pgm(dir / "f.pgm", f);
  const auto b = read_bytes(dir / "f.pgm");
  const std::string header = "P5\n5 2\n255\n";
  ASSERT_EQ(b.size(), header.size() + 10);
  EXPECT_EQ(std::string(b.begin(), b.begin() + static_cast<long>(header.size())), header);
  EXPECT_EQ(b[header.size()], 255);
  EXPECT_EQ(b[header.size() + 1], 255);
  EXPECT_EQ(b[header.size() + 9], 128);
}

}  // namespace
}  // namespace crowdmac
