#include "srl/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "srl/error.hpp"

namespace srl {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || channels < 1 || channels > 4) {
    throw ArgumentError("invalid image dimensions");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Rgb Image::rgb(int x, int y) const {
  if (channels_ >= 3) {
    const std::size_t i = index(x, y, 0);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  const double v = data_[index(x, y, 0)];
  return {v, v, v};
}

void Image::set_rgb(int x, int y, const Rgb& value) {
  if (channels_ >= 3) {
    const std::size_t i = index(x, y, 0);
    data_[i] = static_cast<float>(value[0]);
    data_[i + 1] = static_cast<float>(value[1]);
    data_[i + 2] = static_cast<float>(value[2]);
  } else {
    data_[index(x, y, 0)] = static_cast<float>(value.mean());
  }
}

bool Image::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

double psnr(const Image& reference, const Image& test) {
  if (reference.width() != test.width() || reference.height() != test.height() ||
      reference.channels() != test.channels()) {
    throw ArgumentError("psnr: image dimensions differ");
  }
  const auto& a = reference.pixels();
  const auto& b = test.pixels();
  double mse = 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    mse += d * d;
    peak = std::max(peak, std::abs(static_cast<double>(a[i])));
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  if (peak == 0.0) peak = 1.0;
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace srl
