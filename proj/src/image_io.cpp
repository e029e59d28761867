#include "srl/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "srl/error.hpp"

namespace srl::io {

namespace {

constexpr int kMinRleWidth = 8;
constexpr int kMaxRleWidth = 0x7fff;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

bool read_line(std::istream& in, std::string& line) {
  line.clear();
  char c;
  while (in.get(c)) {
    if (c == '\n') return true;
    line.push_back(c);
  }
  return !line.empty();
}

void read_flat_scanline(std::istream& in, std::uint8_t* dst, int width, long long& offset) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(width) * 4);
  if (in.gcount() != static_cast<std::streamsize>(width) * 4) {
    throw ParseError("truncated RGBE scanline", offset + in.gcount());
  }
  offset += static_cast<long long>(width) * 4;
}

// New-style RLE: four separate channel planes, each a sequence of runs
// (count > 128: repeat next byte count-128 times) and dumps (count literal bytes).
void read_rle_scanline(std::istream& in, std::uint8_t* dst, int width, long long& offset) {
  std::vector<std::uint8_t> plane(static_cast<std::size_t>(width));
  for (int c = 0; c < 4; ++c) {
    int x = 0;
    while (x < width) {
      std::uint8_t head[2];
      in.read(reinterpret_cast<char*>(head), 1);
      if (in.gcount() != 1) throw ParseError("truncated RLE run header", offset);
      ++offset;
      int count = head[0];
      if (count > 128) {
        count -= 128;
        if (x + count > width) throw ParseError("RLE run overflows scanline", offset - 1);
        in.read(reinterpret_cast<char*>(head + 1), 1);
        if (in.gcount() != 1) throw ParseError("truncated RLE run", offset);
        ++offset;
        std::fill_n(plane.begin() + x, count, head[1]);
      } else {
        if (count == 0 || x + count > width) {
          throw ParseError("invalid RLE dump length", offset - 1);
        }
        in.read(reinterpret_cast<char*>(plane.data() + x), count);
        if (in.gcount() != count) throw ParseError("truncated RLE dump", offset + in.gcount());
        offset += count;
      }
      x += count;
    }
    for (int i = 0; i < width; ++i) dst[static_cast<std::size_t>(i) * 4 + c] = plane[i];
  }
}

void write_rle_plane(std::ostream& out, const std::uint8_t* data, int width) {
  constexpr int kMinRun = 4;
  int cur = 0;
  while (cur < width) {
    int beg_run = cur;
    int run_count = 0;
    int old_run_count = 0;
    while (run_count < kMinRun && beg_run < width) {
      beg_run += run_count;
      old_run_count = run_count;
      run_count = 1;
      while (beg_run + run_count < width && run_count < 127 &&
             data[beg_run] == data[beg_run + run_count]) {
        ++run_count;
      }
    }
    // A short run just before the long one is cheaper as a run too.
    if (old_run_count > 1 && old_run_count == beg_run - cur) {
      const std::uint8_t buf[2] = {static_cast<std::uint8_t>(128 + old_run_count), data[cur]};
      out.write(reinterpret_cast<const char*>(buf), 2);
      cur = beg_run;
    }
    while (cur < beg_run) {
      int nonrun = std::min(beg_run - cur, 128);
      const auto n = static_cast<std::uint8_t>(nonrun);
      out.write(reinterpret_cast<const char*>(&n), 1);
      out.write(reinterpret_cast<const char*>(data + cur), nonrun);
      cur += nonrun;
    }
    if (run_count >= kMinRun) {
      const std::uint8_t buf[2] = {static_cast<std::uint8_t>(128 + run_count), data[beg_run]};
      out.write(reinterpret_cast<const char*>(buf), 2);
      cur += run_count;
    }
  }
}

}  // namespace

std::array<std::uint8_t, 4> encode_rgbe(float r, float g, float b) {
  const double v = std::max({static_cast<double>(r), static_cast<double>(g),
                             static_cast<double>(b)});
  if (!(v >= 1e-32)) return {0, 0, 0, 0};
  int e = 0;
  const double m = std::frexp(v, &e);
  if (e + 128 > 255) {
    throw ArgumentError("radiance value too large for RGBE encoding");
  }
  if (e + 128 < 1) return {0, 0, 0, 0};
  const double scale = m * 256.0 / v;
  auto quant = [scale](float c) {
    const double q = std::floor(std::max(0.0, static_cast<double>(c)) * scale);
    return static_cast<std::uint8_t>(std::min(q, 255.0));
  };
  return {quant(r), quant(g), quant(b), static_cast<std::uint8_t>(e + 128)};
}

Rgb decode_rgbe(const std::array<std::uint8_t, 4>& rgbe) {
  if (rgbe[3] == 0) return Rgb::Zero();
  const double f = std::ldexp(1.0, static_cast<int>(rgbe[3]) - (128 + 8));
  return {(rgbe[0] + 0.5) * f, (rgbe[1] + 0.5) * f, (rgbe[2] + 0.5) * f};
}

Image read_rgbe(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  long long offset = 0;
  if (!read_line(in, line) || line.rfind("#?", 0) != 0) {
    throw ParseError(fmt::format("'{}' is not a Radiance file (missing #? magic)", path.string()),
                     0);
  }
  offset += static_cast<long long>(line.size()) + 1;
  for (;;) {
    if (!read_line(in, line) && in.eof()) throw ParseError("RGBE header not terminated", offset);
    offset += static_cast<long long>(line.size()) + 1;
    if (line.empty() || line == "\r") break;
    if (line.rfind("FORMAT=", 0) == 0 && line.substr(7) != "32-bit_rle_rgbe") {
      throw ParseError(fmt::format("unsupported RGBE pixel format '{}'", line.substr(7)),
                       offset - static_cast<long long>(line.size()) - 1);
    }
  }
  if (!read_line(in, line)) throw ParseError("missing RGBE resolution line", offset);
  int width = 0, height = 0;
  {
    std::istringstream res(line);
    std::string ya, xa;
    if (!(res >> ya >> height >> xa >> width) || ya != "-Y" || xa != "+X" || width <= 0 ||
        height <= 0) {
      throw ParseError(fmt::format("unsupported RGBE resolution line '{}'", line), offset);
    }
  }
  offset += static_cast<long long>(line.size()) + 1;

  Image image(width, height, 3);
  std::vector<std::uint8_t> scan(static_cast<std::size_t>(width) * 4);
  for (int y = 0; y < height; ++y) {
    if (width < kMinRleWidth || width > kMaxRleWidth) {
      read_flat_scanline(in, scan.data(), width, offset);
    } else {
      std::uint8_t head[4];
      in.read(reinterpret_cast<char*>(head), 4);
      if (in.gcount() != 4) throw ParseError("truncated RGBE scanline", offset + in.gcount());
      offset += 4;
      if (head[0] == 2 && head[1] == 2 && (head[2] & 0x80) == 0) {
        if (((head[2] << 8) | head[3]) != width) {
          throw ParseError("RLE scanline width mismatch", offset - 4);
        }
        read_rle_scanline(in, scan.data(), width, offset);
      } else {
        std::memcpy(scan.data(), head, 4);
        read_flat_scanline(in, scan.data() + 4, width - 1, offset);
      }
    }
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(x) * 4;
      image.set_rgb(x, y, decode_rgbe({scan[i], scan[i + 1], scan[i + 2], scan[i + 3]}));
    }
  }
  return image;
}

void write_rgbe(const Image& image, const std::filesystem::path& path) {
  if (image.empty()) throw ArgumentError("cannot write an empty image");
  std::ofstream out = open_output(path);
  const int width = image.width();
  const int height = image.height();
  out << "#?RADIANCE\n# written by splat-relight\nFORMAT=32-bit_rle_rgbe\n\n"
      << "-Y " << height << " +X " << width << "\n";
  const bool rle = width >= kMinRleWidth && width <= kMaxRleWidth;
  std::vector<std::uint8_t> scan(static_cast<std::size_t>(width) * 4);
  std::vector<std::uint8_t> plane(static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Rgb c = image.rgb(x, y);
      const auto px = encode_rgbe(static_cast<float>(c[0]), static_cast<float>(c[1]),
                                  static_cast<float>(c[2]));
      std::copy(px.begin(), px.end(), scan.begin() + static_cast<std::ptrdiff_t>(x) * 4);
    }
    if (!rle) {
      out.write(reinterpret_cast<const char*>(scan.data()),
                static_cast<std::streamsize>(scan.size()));
      continue;
    }
    const std::uint8_t head[4] = {2, 2, static_cast<std::uint8_t>(width >> 8),
                                  static_cast<std::uint8_t>(width & 0xff)};
    out.write(reinterpret_cast<const char*>(head), 4);
    for (int c = 0; c < 4; ++c) {
      for (int x = 0; x < width; ++x) plane[x] = scan[static_cast<std::size_t>(x) * 4 + c];
      write_rle_plane(out, plane.data(), width);
    }
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

float srgb_to_linear(float encoded) {
  const float c = std::clamp(encoded, 0.0f, 1.0f);
  return c <= 0.04045f ? c / 12.92f : std::pow((c + 0.055f) / 1.055f, 2.4f);
}

float linear_to_srgb(float linear) {
  const float c = std::clamp(linear, 0.0f, 1.0f);
  return c <= 0.0031308f ? c * 12.92f : 1.055f * std::pow(c, 1.0f / 2.4f) - 0.055f;
}

namespace {

std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, std::uint32_t format,
                                         int& width, int& height) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  const std::string name = path.string();
  if (!std::filesystem::exists(path)) {
    throw IoError(fmt::format("cannot open '{}' for reading", name));
  }
  if (!png_image_begin_read_from_file(&img, name.c_str())) {
    throw ParseError(fmt::format("'{}': {}", name, img.message), 0);
  }
  img.format = format;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ParseError(fmt::format("'{}': {}", name, img.message), 0);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return bytes;
}

void write_png_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes,
                     int width, int height, std::uint32_t format) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  const std::string name = path.string();
  if (!png_image_write_to_file(&img, name.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError(fmt::format("failed writing '{}': {}", name, img.message));
  }
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  int width = 0, height = 0;
  const auto bytes = read_png_bytes(path, PNG_FORMAT_RGB, width, height);
  Image image(width, height, 3);
  auto& px = image.pixels();
  for (std::size_t i = 0; i < bytes.size(); ++i) px[i] = srgb_to_linear(bytes[i] / 255.0f);
  return image;
}

void write_png(const Image& image, const std::filesystem::path& path, bool srgb) {
  if (image.empty()) throw ArgumentError("cannot write an empty image");
  const bool gray = image.channels() == 1;
  const int out_channels = gray ? 1 : 3;
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.width()) * image.height() *
                                  out_channels);
  std::size_t k = 0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < out_channels; ++c) {
        float v = image.at(x, y, std::min(c, image.channels() - 1));
        if (!std::isfinite(v)) v = 0.0f;
        v = srgb ? linear_to_srgb(v) : std::clamp(v, 0.0f, 1.0f);
        bytes[k++] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  write_png_bytes(path, bytes, image.width(), image.height(),
                  gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  int width = 0, height = 0;
  const auto bytes = read_png_bytes(path, PNG_FORMAT_GRAY, width, height);
  BinaryMask mask(width, height);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.bits[i] = bytes[i] != 0 ? 1 : 0;
  return mask;
}

void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(mask.bits.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
  write_png_bytes(path, bytes, mask.width, mask.height, PNG_FORMAT_GRAY);
}

}  // namespace srl::io
