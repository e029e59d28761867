#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "srl/image.hpp"

namespace srl::io {

// Radiance RGBE. A pixel shares one exponent byte e across three 8-bit
// mantissas; the largest channel v is written as floor(m * 256) with
// v = m * 2^(e-128), m in [0.5, 1), so its mantissa byte lands in [128, 256).
// Decoding returns (byte + 0.5) * 2^(e-136), and e == 0 encodes black.
std::array<std::uint8_t, 4> encode_rgbe(float r, float g, float b);
Rgb decode_rgbe(const std::array<std::uint8_t, 4>& rgbe);

// Reads "#?RADIANCE"/"#?RGBE" files with -Y H +X W orientation, flat or
// run-length encoded scanlines. Returns a 3-channel linear image.
Image read_rgbe(const std::filesystem::path& path);
// Writes run-length encoded scanlines when 8 <= width < 32768, flat otherwise.
void write_rgbe(const Image& image, const std::filesystem::path& path);

// Piecewise sRGB transfer curve (IEC 61966-2-1).
float srgb_to_linear(float encoded);
float linear_to_srgb(float linear);

// 8-bit PNG. read_png decodes sRGB to linear RGB; write_png clamps to [0, 1]
// and encodes linear values to sRGB unless `srgb` is false. One-channel
// images are written as grayscale.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path, bool srgb = true);

// Any nonzero sample in the first channel marks the pixel as object.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path);

}  // namespace srl::io
