#pragma once

// Brute-force ground truth: direct quadrature of diffuse outgoing radiance
//   B(n) = albedo / pi * integral L(u) max(n.u, 0) du
// and synthetic assets built from it.

#include <cstdint>

#include "srl/envmap.hpp"
#include "srl/raster.hpp"
#include "srl/splat_model.hpp"

namespace srl::oracle {

// Deliberately unrelated to any seed the library defaults to.
inline constexpr std::uint64_t kQuadratureSeed = 0x5eed0f0a11c0ffeeULL;
// Ten times the default transfer sample count.
inline constexpr int kDefaultQuadrature = 50000;
inline constexpr int kMinQuadrature = 1000;

struct DiffuseSurfacePoint {
  Vec3 normal = Vec3::UnitZ();
  Rgb albedo = Rgb::Ones();
};

// Equal-area quadrature set with the map looked up once, for evaluating many
// surface points against the same environment.
class RadianceIntegrator {
 public:
  RadianceIntegrator(const env::EquirectMap& env, int n_quad = kDefaultQuadrature,
                     std::uint64_t seed = kQuadratureSeed);

  Rgb radiance(const DiffuseSurfacePoint& point) const;
  int size() const { return static_cast<int>(dirs_.rows()); }

 private:
  Eigen::MatrixX3d dirs_;
  Eigen::MatrixX3d weighted_radiance_;  // w_i L(dir_i)
};

Rgb integrate_radiance(const DiffuseSurfacePoint& point, const env::EquirectMap& env,
                       int n_quad = kDefaultQuadrature, std::uint64_t seed = kQuadratureSeed);

struct SphereOptions {
  int l_max = sh::kDefaultDegree;
  double opacity = 0.99;
  int n_quad = kDefaultQuadrature;
  std::uint64_t seed = kQuadratureSeed;
};

// Surfels on a Fibonacci lattice with outward normals and DC-only appearance
// equal to the integrated diffuse radiance under env.
splat::GaussianModel make_lambertian_sphere(const Vec3& center, double radius, const Rgb& albedo,
                                            const env::EquirectMap& env, int n_gaussians,
                                            const SphereOptions& options = {});

struct ProductCheck {
  double max_relative_error = 0.0;
  double seconds = 0.0;
};

// Compares quadrature radiance against the zonal product
// sum_lm A_l L_lm Y_lm(n) / pi (albedo 1) at n_dirs random normals.
ProductCheck verify_product_formula(const env::EquirectMap& env, int l_max, int n_dirs,
                                    std::uint64_t seed = 1, int n_quad = kDefaultQuadrature);

struct BandlimitedEnv {
  sh::ShCoeffs coeffs;
  env::EquirectMap map;
};

// Random coefficients of degree <= l_max with the DC raised until the map is
// at least `floor` everywhere.
BandlimitedEnv random_bandlimited_env(int l_max, int height, std::uint64_t seed,
                                      double floor = 0.1);

// Equirect map of a function given by SH coefficients, evaluated exactly at
// texel centers.
env::EquirectMap render_sh(const sh::ShCoeffs& coeffs, int height);

struct TwoClusterScene {
  splat::GaussianModel model;
  std::vector<std::size_t> cluster_a;
  std::vector<std::size_t> cluster_b;
  Vec3 center_a = Vec3::Zero();
  Vec3 center_b = Vec3::Zero();
  double half_extent = 0.0;  // square footprint of each cluster in the z = 0 plane
  std::vector<raster::Camera> cameras;
  // Pixels whose ray meets the z = 0 plane inside cluster A's footprint.
  std::vector<BinaryMask> masks_a;
};

// Two opaque single-layer grids of blobs in the z = 0 plane centred at
// (-1.2, 0, 0) and (+1.2, 0, 0), spaced four blob sizes apart and jittered by
// `seed`. Cameras sit on an elevated ring looking at the origin, so every
// blob is seen unoccluded in every view.
TwoClusterScene make_two_cluster_scene(int per_cluster = 64, int views = 8, int resolution = 160,
                                       std::uint64_t seed = 1);

}  // namespace srl::oracle
