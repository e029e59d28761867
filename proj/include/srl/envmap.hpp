#pragma once

// Environment maps over the unit sphere.
//
// Equirectangular convention (used by every reader, writer and sampler here):
// +z is up, row v spans polar angle theta = pi * (v + 0.5) / H measured from +z,
// column u spans azimuth phi = 2pi * (u + 0.5) / W measured from +x toward +y,
// and W = 2H. Direction = (sin theta cos phi, sin theta sin phi, cos theta).
//
// Cube faces are ordered +x, -x, +y, -y, +z, -z. Each face is a 90 degree
// pinhole view from the center; face pixel (x, y) (row 0 at the top) looks
// along forward + s*right + t*up with s = 2(x+0.5)/res - 1, t = 1 - 2(y+0.5)/res.
// Up vectors: +z for the four side faces, -x for +z, +x for -z; right is
// forward x up.

#include <array>
#include <cstdint>
#include <optional>

#include "srl/image.hpp"
#include "srl/sh.hpp"

namespace srl::env {

struct PixelCoord {
  double u = 0.0;  // continuous column coordinate, texel centers at i + 0.5
  double v = 0.0;  // continuous row coordinate
};

PixelCoord dir_to_uv(const Vec3& dir, int width, int height);
Vec3 uv_to_dir(double u, double v, int width, int height);

class EquirectMap {
 public:
  EquirectMap() = default;
  explicit EquirectMap(int height, const Rgb& fill = Rgb::Zero());
  explicit EquirectMap(Image image);

  int width() const { return image_.width(); }
  int height() const { return image_.height(); }
  const Image& image() const { return image_; }
  Image& image() { return image_; }

  Rgb texel(int u, int v) const { return image_.rgb(u, v); }
  void set_texel(int u, int v, const Rgb& value) { image_.set_rgb(u, v, value); }
  Vec3 texel_dir(int u, int v) const;

  // Bilinear lookup, wrapping in azimuth and clamping at the poles.
  Rgb sample(const Vec3& dir) const;

  // Throws ArgumentError on non-finite values, or on negative radiance when
  // require_nonnegative is set.
  void validate(bool require_nonnegative = true) const;

  // Mean radiance weighted by texel solid angle.
  Rgb mean_radiance() const;

 private:
  Image image_;
};

struct FaceFrame {
  Vec3 forward;
  Vec3 right;
  Vec3 up;
};

inline constexpr int kCubeFaces = 6;
const FaceFrame& face_frame(int face);

class CubeMap {
 public:
  CubeMap() = default;
  explicit CubeMap(int face_res, const Rgb& fill = Rgb::Zero());

  int face_res() const { return face_res_; }
  Image& face(int f) { return faces_[static_cast<std::size_t>(f)]; }
  const Image& face(int f) const { return faces_[static_cast<std::size_t>(f)]; }

  // Optional per-face accumulated opacity (one channel) from a capture.
  bool has_alpha() const { return !alpha_[0].empty(); }
  Image& alpha(int f) { return alpha_[static_cast<std::size_t>(f)]; }
  const Image& alpha(int f) const { return alpha_[static_cast<std::size_t>(f)]; }
  void enable_alpha();

  Vec3 texel_dir(int face, int x, int y) const;
  void validate() const;

 private:
  int face_res_ = 0;
  std::array<Image, kCubeFaces> faces_;
  std::array<Image, kCubeFaces> alpha_;
};

struct FaceCoord {
  int face = 0;
  double x = 0.0;  // continuous face pixel coordinates
  double y = 0.0;
};

// Face whose axis has the largest |component| of dir, and the position on it.
FaceCoord dir_to_face(const Vec3& dir, int face_res);

EquirectMap cubemap_to_equirect(const CubeMap& cube, int out_height);
// Alpha channel of a captured cube resampled to an equirect grid (1 channel).
Image cubemap_alpha_to_equirect(const CubeMap& cube, int out_height);
// Point-samples the equirect map at every face texel center.
CubeMap equirect_to_cubemap(const EquirectMap& map, int face_res);

// Replaces texels whose alpha is below threshold with `background`, or with
// the mean of the valid texels when no background is given. Returns the
// number of texels replaced.
std::size_t fill_missing(EquirectMap& map, const Image& alpha,
                         const std::optional<Rgb>& background, double threshold = 0.5);

struct LdrToHdrParams {
  double gamma = 2.2;
  double boost = 4.0;
  double knee = 0.9;
};

// v^gamma below the knee; above it the value is multiplied by a smoothstep
// ramp from 1 at the knee to `boost` at v = 1. Monotone and continuous.
double ldr_to_hdr_value(double v, const LdrToHdrParams& params);
EquirectMap ldr_to_hdr(const EquirectMap& map, const LdrToHdrParams& params = {});

// Throws ArgumentError unless R is orthonormal with det +1 (tolerance 1e-6).
void check_rotation(const Mat3& r);
Mat3 azimuth_rotation(double radians);

// output(dir) = input(R^T dir), bilinear.
EquirectMap rotate_equirect(const EquirectMap& map, const Mat3& r);

enum class SamplingStrategy {
  kEqualArea,            // seeded-rotation spherical Fibonacci, weights 4pi/n
  kEquirectSinWeighted,  // jittered equirect grid, weights proportional to sin(theta)
  kUniformUv,            // uniform in (u, v) with equal weights; biased toward the poles
};

// kEquirectSinWeighted uses R = round(sqrt(n/2)) rows, distributing n samples
// across them. Weights always sum to 4pi.
sh::SampleSet sample_sphere(int n, SamplingStrategy strategy, std::uint64_t seed,
                            int l_max = sh::kDefaultDegree);

// Every texel center of an H x 2H grid with sin(theta) solid-angle weights.
sh::SampleSet texel_grid_samples(int height, int l_max);

// Bilinear map lookups at every sample direction (N x 3).
Eigen::MatrixX3d lookup(const EquirectMap& map, const sh::SampleSet& samples);

sh::ShCoeffs envmap_to_sh(const EquirectMap& map, int l_max, const sh::SampleSet& samples,
                          sh::ProjectionMethod method = sh::ProjectionMethod::kLeastSquares);

// Texelwise reconstruction. Negative values are kept; writers of LDR output
// clamp them.
EquirectMap sh_to_envmap(const sh::ShCoeffs& coeffs, int out_height);

}  // namespace srl::env
