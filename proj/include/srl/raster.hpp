#pragma once

// CPU splat renderer (EWA projection, global front-to-back sort, per-pixel
// alpha compositing).
//
// Camera convention: world-to-camera rotation R and translation t map a world
// point p to p_cam = R p + t with +x right, +y down, +z forward. Pixel (i, j)
// has its center at (i + 0.5, j + 0.5) and a camera-space point projects to
// (fx x/z + cx, fy y/z + cy).
//
// Per Gaussian: Sigma' = J W Sigma W^T J^T + 0.3 I, pixel alpha =
// min(0.99, opacity * exp(-0.5 d^T Sigma'^-1 d)); contributions below 1/255
// are skipped, and a pixel stops after the transmittance drops below 1e-4.
// Colors use the direction from the camera center to the Gaussian mean and
// are clamped at zero.

#include <cstdint>
#include <vector>

#include "srl/envmap.hpp"
#include "srl/image.hpp"
#include "srl/splat_model.hpp"

namespace srl::raster {

inline constexpr double kCovarianceFloor = 0.3;
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr double kNearPlane = 0.01;

struct Camera {
  Mat3 rotation = Mat3::Identity();  // world to camera
  Vec3 translation = Vec3::Zero();
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  Vec3 center() const { return -rotation.transpose() * translation; }

  // Throws ArgumentError for non-positive focal lengths or image size and a
  // non-rotation extrinsic. Returns false if the principal point lies outside
  // the image (allowed, but worth a warning).
  bool validate() const;

  // Pinhole camera at eye looking at target; fov_y in radians.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y,
                        int width, int height);
};

struct RenderOptions {
  Rgb background = Rgb::Zero();
  // Accumulate sum over pixels of alpha*T per Gaussian.
  bool record_weights = false;
  // When set (and record_weights), each pixel's alpha*T is multiplied by the
  // mask value before accumulation. Must match the camera resolution.
  const BinaryMask* weight_mask = nullptr;
  // Per-Gaussian flag; nonzero entries are not rendered. Empty = render all.
  std::vector<std::uint8_t> skip;
};

struct RenderOutput {
  Image color;  // H x W x 3 linear
  Image alpha;  // H x W x 1, accumulated opacity
  std::vector<double> per_gaussian_weight;  // empty unless record_weights
};

RenderOutput render(const splat::GaussianModel& model, const Camera& camera,
                    const RenderOptions& options = {});

// 90 degree pinhole camera for one cube face (see envmap.hpp for face frames).
Camera face_camera(int face, const Vec3& center, int face_res);

struct CaptureOptions {
  Rgb background = Rgb::Zero();
  // Gaussians excluded from the capture, e.g. the object itself.
  std::vector<std::size_t> exclude;
};

// Six face renders around `center`; the returned cube carries alpha.
env::CubeMap render_cubemap(const splat::GaussianModel& model, const Vec3& center, int face_res,
                            const CaptureOptions& options = {});

struct MaskStats {
  // sum_k sum_p M^k(p) * alpha_j T_j at p in view k.
  std::vector<double> numerator;
  // sum_k sum_p 1(M^k(p)), shared by all Gaussians.
  double denominator = 0.0;
};

MaskStats accumulate_mask_stats(const splat::GaussianModel& model,
                                const std::vector<Camera>& cameras,
                                const std::vector<BinaryMask>& masks);

}  // namespace srl::raster
