#pragma once

#include <cstdint>
#include <vector>

#include "srl/types.hpp"

namespace srl {

// Interleaved float image, row 0 at the top.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  // First three channels as RGB (grayscale images replicate channel 0).
  Rgb rgb(int x, int y) const;
  void set_rgb(int x, int y, const Rgb& value);

  std::vector<float>& pixels() { return data_; }
  const std::vector<float>& pixels() const { return data_; }

  bool all_finite() const;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 1 = object

  BinaryMask() = default;
  BinaryMask(int w, int h, bool value = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
};

// Peak signal-to-noise ratio over all channels, peak taken from `reference`.
double psnr(const Image& reference, const Image& test);

}  // namespace srl
