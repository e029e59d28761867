#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "srl/error.hpp"
#include "srl/image_io.hpp"
#include "support.hpp"

using namespace srl;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

Image random_hdr(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> exponent(-8.0, 8.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double scale = std::exp2(exponent(rng));
      img.set_rgb(x, y, Rgb(unit(rng), unit(rng), unit(rng)) * scale);
    }
  }
  return img;
}

}  // namespace

TEST(Rgbe, EncodeExamples) {
  EXPECT_EQ(io::encode_rgbe(1.0f, 1.0f, 1.0f), (std::array<std::uint8_t, 4>{128, 128, 128, 129}));
  EXPECT_EQ(io::encode_rgbe(0.0f, 0.0f, 0.0f), (std::array<std::uint8_t, 4>{0, 0, 0, 0}));
  EXPECT_EQ(io::encode_rgbe(0.5f, 0.25f, 0.0f), (std::array<std::uint8_t, 4>{128, 64, 0, 128}));
  const auto e = io::encode_rgbe(3.0f, 0.1f, 1.0f);
  EXPECT_GE(e[0], 128);  // largest channel's mantissa in [128, 256)
}

TEST(Rgbe, DecodeExamples) {
  EXPECT_TRUE(io::decode_rgbe({0, 0, 0, 0}).isZero());
  EXPECT_NEAR(io::decode_rgbe({128, 128, 128, 129})[0], 128.5 / 128.0, 1e-12);
}

TEST(Rgbe, RoundTripWithinSharedExponentBound) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double scale = std::exp2(-20.0 + 40.0 * unit(rng));
    const Rgb v = Rgb(unit(rng), unit(rng), unit(rng)) * scale;
    const auto f = v.cast<float>();
    const Rgb back = io::decode_rgbe(io::encode_rgbe(f[0], f[1], f[2]));
    const double peak = f.maxCoeff();
    for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(back[c] - f[c]), peak / 256.0 + 1e-30);
  }
}

TEST(Rgbe, FileRoundTripRleAndFlat) {
  srl::testing::TempDir dir;
  for (int w : {5, 64, 300}) {
    const Image img = random_hdr(w, 7, static_cast<std::uint64_t>(w));
    const auto path = dir / ("map" + std::to_string(w) + ".hdr");
    io::write_rgbe(img, path);
    const Image back = io::read_rgbe(path);
    ASSERT_EQ(back.width(), w);
    ASSERT_EQ(back.height(), 7);
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < w; ++x) {
        const Rgb a = img.rgb(x, y);
        const auto af = a.cast<float>();
        const Rgb expected = io::decode_rgbe(io::encode_rgbe(af[0], af[1], af[2]));
        for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(back.at(x, y, c), static_cast<float>(expected[c]));
      }
    }
    // Writing the decoded image again reproduces the file byte for byte.
    const auto again = dir / "again.hdr";
    io::write_rgbe(back, again);
    EXPECT_EQ(read_bytes(path), read_bytes(again));
  }
}

TEST(Rgbe, RunsOfEqualPixelsCompress) {
  srl::testing::TempDir dir;
  Image flat(256, 4, 3, 0.5f);
  io::write_rgbe(flat, dir / "flat.hdr");
  EXPECT_LT(std::filesystem::file_size(dir / "flat.hdr"), 256u * 4u);
  const Image back = io::read_rgbe(dir / "flat.hdr");
  EXPECT_FLOAT_EQ(back.at(100, 2, 1), 0.5f * 128.5f / 128.0f);
}

TEST(Rgbe, ParseErrors) {
  srl::testing::TempDir dir;
  write_bytes(dir / "bad_magic.hdr", "P6\n2 2\n255\n");
  EXPECT_THROW(io::read_rgbe(dir / "bad_magic.hdr"), ParseError);
  write_bytes(dir / "bad_format.hdr", "#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n\x80\x80\x80\x81");
  EXPECT_THROW(io::read_rgbe(dir / "bad_format.hdr"), ParseError);
  write_bytes(dir / "bad_orient.hdr", "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n+Y 1 +X 1\n\x80\x80\x80\x81");
  EXPECT_THROW(io::read_rgbe(dir / "bad_orient.hdr"), ParseError);

  const Image img = random_hdr(40, 5, 9);
  io::write_rgbe(img, dir / "full.hdr");
  const std::string bytes = read_bytes(dir / "full.hdr");
  write_bytes(dir / "truncated.hdr", bytes.substr(0, bytes.size() - 30));
  try {
    io::read_rgbe(dir / "truncated.hdr");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 0);
  }
  EXPECT_THROW(io::read_rgbe(dir / "missing.hdr"), IoError);
}

TEST(Rgbe, AcceptsHeaderVariants) {
  srl::testing::TempDir dir;
  // Extra header lines, "#?RGBE" magic and flat scanlines.
  std::string bytes = "#?RGBE\n# comment\nEXPOSURE=1.0\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n";
  bytes += std::string("\x80\x80\x80\x81\x80\x40\x00\x80", 8);
  write_bytes(dir / "variant.hdr", bytes);
  const Image img = io::read_rgbe(dir / "variant.hdr");
  EXPECT_NEAR(img.at(0, 0, 0), 128.5 / 128.0, 1e-6);
  EXPECT_NEAR(img.at(1, 0, 1), 64.5 / 256.0, 1e-6);
}

TEST(Srgb, CurveRoundTrip) {
  for (int i = 0; i <= 255; ++i) {
    const float e = i / 255.0f;
    EXPECT_NEAR(io::linear_to_srgb(io::srgb_to_linear(e)), e, 1e-6);
  }
  EXPECT_NEAR(io::srgb_to_linear(0.5f), 0.21404f, 1e-5);
  EXPECT_NEAR(io::linear_to_srgb(0.0031308f), 0.04045f, 1e-5);
}

TEST(Png, RoundTrip) {
  srl::testing::TempDir dir;
  Image img(13, 9, 3);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 13; ++x) img.set_rgb(x, y, Rgb(x / 12.0, y / 8.0, 0.25));
  }
  io::write_png(img, dir / "a.png");
  const Image back = io::read_png(dir / "a.png");
  ASSERT_EQ(back.width(), 13);
  ASSERT_EQ(back.height(), 9);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 13; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(io::linear_to_srgb(back.at(x, y, c)), io::linear_to_srgb(img.at(x, y, c)), 0.5 / 255 + 1e-6);
      }
    }
  }
  EXPECT_THROW(io::read_png(dir / "none.png"), IoError);
}

TEST(Png, MaskRoundTrip) {
  srl::testing::TempDir dir;
  BinaryMask mask(10, 6);
  mask.set(3, 2, true);
  mask.set(9, 5, true);
  io::write_mask_png(mask, dir / "m.png");
  const BinaryMask back = io::read_mask_png(dir / "m.png");
  EXPECT_EQ(back.bits, mask.bits);
  EXPECT_EQ(back.count(), 2u);
}
