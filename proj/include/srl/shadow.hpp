#pragma once

// Soft shadows from dominant light lobes. The target environment is smoothed
// with a low-degree SH fit, its brightest directions become proxy lights, the
// object's Gaussians are projected along each light onto a receiver plane as
// soft occluders, and receiver Gaussians near the plane get their appearance
// coefficients attenuated by the composited transmittance.

#include <filesystem>
#include <string>
#include <vector>

#include "srl/envmap.hpp"
#include "srl/splat_model.hpp"

namespace srl::shadow {

struct LightLobe {
  Vec3 direction = Vec3::UnitZ();  // from the scene toward the light
  double intensity = 0.0;          // smoothed luminance at the peak
  double weight = 1.0;             // sums to 1 over the returned lobes
};

struct LobeOptions {
  int count = 1;
  int smooth_degree = 2;
  double suppression_degrees = 30.0;
  // Peak-to-trough contrast, relative to the peak, below which the map is
  // treated as having no dominant direction.
  double min_contrast = 0.01;
  // Rows of the 2:1 evaluation grid for the smoothed luminance.
  int grid_height = 180;
};

struct LobeResult {
  std::vector<LightLobe> lobes;
  std::string status;  // "ok" or "no dominant lobe"
  bool found() const { return !lobes.empty(); }
};

LobeResult dominant_lobes(const env::EquirectMap& map, const LobeOptions& options = {});

struct ReceiverPlane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  void validate() const;
  double signed_distance(const Vec3& p) const { return normal.dot(p - point); }
};

// Texel (x, y) covers the square centered at
// origin + ((x+0.5)/res - 0.5) extent u + ((y+0.5)/res - 0.5) extent v.
struct ShadowMap {
  ReceiverPlane plane;
  Vec3 origin = Vec3::Zero();  // map center, on the plane
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  int res = 0;
  double extent = 0.0;
  std::vector<double> transmittance;  // row-major, res x res

  double at(int x, int y) const {
    return transmittance[static_cast<std::size_t>(y) * res + x];
  }
  Vec3 texel_center(int x, int y) const;
  // Bilinear lookup of the orthogonal projection of p; 1 outside the map.
  double sample(const Vec3& p) const;
  // Centroid of the texel centers weighted by 1 - transmittance, or nullopt
  // for a map without shadow.
  std::optional<Vec3> shadow_centroid() const;
  // Center of the darkest texel (first in row-major order on ties).
  Vec3 darkest_texel() const;
};

inline constexpr int kDefaultShadowRes = 256;
inline constexpr double kMinGrazingDegrees = 5.0;

struct ProjectionOptions {
  int res = kDefaultShadowRes;
  // Side length in world units; <= 0 means twice the diameter of the sphere
  // enclosing the object's splats.
  double extent = 0.0;
  // Map center, projected orthogonally onto the plane. Default: the object
  // centroid projected along the light direction.
  std::optional<Vec3> center;
};

// Splats every object Gaussian on the light side of the plane along the lobe
// direction, T = prod(1 - alpha_i). Throws ArgumentError when the lobe lies
// within 5 degrees of the plane.
ShadowMap project_shadow(const splat::GaussianModel& object, const LightLobe& lobe,
                         const ReceiverPlane& plane, const ProjectionOptions& options = {});

struct BakeOptions {
  // Distance from the plane within which scene Gaussians receive shadow;
  // <= 0 means twice the median of the scene's largest per-Gaussian scale.
  double band = 0.0;
  // Gaussians never attenuated (the inserted object itself).
  std::vector<std::size_t> exclude;
};

struct BakeResult {
  splat::GaussianModel model;
  std::size_t receivers = 0;  // Gaussians inside the band
  double band = 0.0;
};

// Receiver appearance is scaled by 1 - strength * (1 - a) with
// a = sum_k weight_k T_k(p); positions, rotations, scales and opacities are
// untouched.
BakeResult bake(const splat::GaussianModel& scene, const std::vector<ShadowMap>& maps,
                const std::vector<LightLobe>& lobes, double strength,
                const BakeOptions& options = {});

Image to_image(const ShadowMap& map);
void write_shadow_png(const ShadowMap& map, const std::filesystem::path& path);

}  // namespace srl::shadow
