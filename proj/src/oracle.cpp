#include "srl/oracle.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "srl/error.hpp"
#include "srl/parallel.hpp"

namespace srl::oracle {

RadianceIntegrator::RadianceIntegrator(const env::EquirectMap& env, int n_quad, std::uint64_t seed) {
  if (n_quad < kMinQuadrature) throw ArgumentError("quadrature needs at least 1000 samples");
  env.validate(false);
  const auto samples = env::sample_sphere(n_quad, env::SamplingStrategy::kEqualArea, seed, 0);
  dirs_.resize(n_quad, 3);
  for (int i = 0; i < n_quad; ++i) dirs_.row(i) = samples.dirs()[static_cast<std::size_t>(i)].transpose();
  weighted_radiance_ = env::lookup(env, samples).array().colwise() * samples.weights().array();
}

Rgb RadianceIntegrator::radiance(const DiffuseSurfacePoint& point) const {
  if (std::abs(point.normal.norm() - 1.0) > 1e-6) throw ArgumentError("surface normal must be unit length");
  const Eigen::VectorXd cosine = (dirs_ * point.normal).cwiseMax(0.0);
  const Eigen::RowVector3d irradiance = cosine.transpose() * weighted_radiance_;
  return point.albedo * irradiance.transpose().array() / kPi;
}

Rgb integrate_radiance(const DiffuseSurfacePoint& point, const env::EquirectMap& env, int n_quad,
                       std::uint64_t seed) {
  return RadianceIntegrator(env, n_quad, seed).radiance(point);
}

splat::GaussianModel make_lambertian_sphere(const Vec3& center, double radius, const Rgb& albedo,
                                            const env::EquirectMap& env, int n_gaussians,
                                            const SphereOptions& options) {
  if (n_gaussians < 100) throw ArgumentError("sphere asset needs at least 100 surfels");
  if (!(radius > 0.0)) throw ArgumentError("sphere radius must be positive");
  const RadianceIntegrator integrator(env, options.n_quad, options.seed);
  const double y00 = 0.5 / std::sqrt(kPi);
  const double spacing = radius * std::sqrt(4.0 * kPi / n_gaussians);
  const double golden = kPi * (3.0 - std::sqrt(5.0));

  splat::GaussianModel model;
  model.l_max = options.l_max;
  model.kind = splat::ModelKind::kSurfel;
  model.gaussians.resize(static_cast<std::size_t>(n_gaussians));
  parallel_for(static_cast<std::size_t>(n_gaussians), [&](std::size_t i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / n_gaussians;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    const Vec3 normal(r * std::cos(phi), r * std::sin(phi), z);
    splat::Gaussian& g = model.gaussians[i];
    g.position = center + radius * normal;
    g.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), normal).normalized();
    g.scale = Vec3(0.5 * spacing, 0.5 * spacing, 1e-3 * spacing);
    g.opacity = options.opacity;
    const Rgb color = integrator.radiance({normal, albedo});
    g.sh = sh::ShCoeffs::from_dc(color / y00, options.l_max);
  }, 64);
  return model;
}

ProductCheck verify_product_formula(const env::EquirectMap& env, int l_max, int n_dirs,
                                    std::uint64_t seed, int n_quad) {
  const auto start = std::chrono::steady_clock::now();
  if (n_dirs < 1) throw ArgumentError("need at least one normal");
  const RadianceIntegrator integrator(env, n_quad);
  const auto fit_samples = env::texel_grid_samples(env.height(), l_max);
  const sh::ShCoeffs coeffs = env::envmap_to_sh(env, l_max, fit_samples);
  const std::vector<double> zonal = sh::clamped_cosine_zonal(l_max);

  // Convolved coefficients A_l L_lm with A_l = sqrt(4 pi / (2l+1)) h_l.
  sh::ShCoeffs convolved = coeffs;
  for (int l = 0; l <= l_max; ++l) {
    const double a = std::sqrt(4.0 * kPi / (2 * l + 1)) * zonal[static_cast<std::size_t>(l)];
    for (int m = -l; m <= l; ++m) convolved.data().row(sh::sh_index(l, m)) *= a;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  ProductCheck check;
  for (int i = 0; i < n_dirs; ++i) {
    Vec3 n(gauss(rng), gauss(rng), gauss(rng));
    n.normalize();
    const Rgb quad = integrator.radiance({n, Rgb::Ones()});
    const Rgb formula = sh::reconstruct(convolved, n) / kPi;
    for (int c = 0; c < 3; ++c) {
      const double scale = std::max(std::abs(quad[c]), std::abs(formula[c]));
      if (scale < 1e-12) continue;
      const double rel = std::abs(quad[c] - formula[c]) / std::max(std::abs(quad[c]), 1e-12);
      check.max_relative_error = std::max(check.max_relative_error, rel);
    }
  }
  check.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return check;
}

env::EquirectMap render_sh(const sh::ShCoeffs& coeffs, int height) {
  env::EquirectMap map(height);
  parallel_for(static_cast<std::size_t>(height), [&](std::size_t v) {
    for (int u = 0; u < map.width(); ++u) {
      map.set_texel(u, static_cast<int>(v), sh::reconstruct(coeffs, map.texel_dir(u, static_cast<int>(v))));
    }
  }, 8);
  return map;
}

BandlimitedEnv random_bandlimited_env(int l_max, int height, std::uint64_t seed, double floor) {
  if (l_max < 0 || l_max > sh::kMaxDegree) throw ArgumentError("degree out of range");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.5);
  std::uniform_real_distribution<double> base(1.0, 2.0);
  const double y00 = 0.5 / std::sqrt(kPi);
  BandlimitedEnv out{sh::ShCoeffs(l_max), {}};
  for (int c = 0; c < 3; ++c) {
    out.coeffs(0, c) = base(rng) / y00;
    for (int k = 1; k < out.coeffs.size(); ++k) out.coeffs(k, c) = gauss(rng);
  }
  out.map = render_sh(out.coeffs, height);
  for (int c = 0; c < 3; ++c) {
    double lowest = std::numeric_limits<double>::infinity();
    for (int v = 0; v < out.map.height(); ++v) {
      for (int u = 0; u < out.map.width(); ++u) lowest = std::min(lowest, out.map.texel(u, v)[c]);
    }
    if (lowest < floor) out.coeffs(0, c) += (floor - lowest) / y00;
  }
  out.map = render_sh(out.coeffs, height);
  return out;
}

TwoClusterScene make_two_cluster_scene(int per_cluster, int views, int resolution, std::uint64_t seed) {
  if (per_cluster < 1 || views < 1 || resolution < 8) throw ArgumentError("two-cluster scene parameters too small");
  TwoClusterScene scene;
  scene.center_a = Vec3(-1.2, 0.0, 0.0);
  scene.center_b = Vec3(1.2, 0.0, 0.0);
  const double size = 0.04;
  const double spacing = 4.0 * size;
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(per_cluster))));
  scene.half_extent = 0.5 * (side - 1) * spacing + 3.0 * size;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.1 * spacing, 0.1 * spacing);
  scene.model.l_max = sh::kDefaultDegree;
  const double y00 = 0.5 / std::sqrt(kPi);
  for (int cluster = 0; cluster < 2; ++cluster) {
    const Vec3& c = cluster == 0 ? scene.center_a : scene.center_b;
    const Rgb color = cluster == 0 ? Rgb(0.8, 0.3, 0.2) : Rgb(0.2, 0.4, 0.8);
    for (int i = 0; i < per_cluster; ++i) {
      const double u = (i % side - 0.5 * (side - 1)) * spacing + jitter(rng);
      const double v = (i / side - 0.5 * (side - 1)) * spacing + jitter(rng);
      splat::Gaussian g;
      g.position = c + Vec3(u, v, 0.0);
      g.scale = Vec3::Constant(size);
      g.opacity = 0.95;
      g.sh = sh::ShCoeffs::from_dc(color / y00, scene.model.l_max);
      (cluster == 0 ? scene.cluster_a : scene.cluster_b).push_back(scene.model.gaussians.size());
      scene.model.gaussians.push_back(g);
    }
  }

  const double distance = 5.0;
  for (int k = 0; k < views; ++k) {
    const double phi = 2.0 * kPi * (k + 0.25) / views;
    const Vec3 eye(distance * std::cos(phi) * 0.8, distance * std::sin(phi) * 0.8, distance * 0.6);
    const raster::Camera cam =
        raster::Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), 50.0 * kPi / 180.0, resolution, resolution);
    BinaryMask mask(resolution, resolution);
    const Vec3 origin = cam.center();
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        const Vec3 local((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
        const Vec3 dir = cam.rotation.transpose() * local;
        if (dir.z() >= 0.0) continue;
        const Vec3 hit = origin - (origin.z() / dir.z()) * dir - scene.center_a;
        mask.set(x, y, std::abs(hit.x()) <= scene.half_extent && std::abs(hit.y()) <= scene.half_extent);
      }
    }
    scene.cameras.push_back(cam);
    scene.masks_a.push_back(std::move(mask));
  }
  return scene;
}

}  // namespace srl::oracle
