#include <gtest/gtest.h>

#include <cmath>

#include "srl/error.hpp"
#include "srl/image_io.hpp"
#include "srl/shadow.hpp"
#include "support.hpp"

using namespace srl;
using srl::testing::blob;
using srl::testing::map_from;

namespace {

double angle_degrees(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / kPi;
}

Vec3 spherical(double theta_deg, double phi_deg) {
  const double t = theta_deg * kPi / 180.0, p = phi_deg * kPi / 180.0;
  return Vec3(std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t));
}

// Black map with one bright texel in the direction `dir`.
env::EquirectMap single_texel(const Vec3& dir, int height = 64) {
  env::EquirectMap map(height);
  const auto uv = env::dir_to_uv(dir, map.width(), map.height());
  map.set_texel(std::min(static_cast<int>(uv.u), map.width() - 1), std::min(static_cast<int>(uv.v), map.height() - 1),
                Rgb::Constant(1000.0));
  return map;
}

// Solid ball of isotropic blobs: concentric Fibonacci shells, symmetric about
// the center.
splat::GaussianModel ball(const Vec3& center, double radius, int per_shell) {
  splat::GaussianModel m;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (double r : {0.25 * radius, 0.5 * radius, 0.75 * radius, radius}) {
    for (int i = 0; i < per_shell; ++i) {
      const double z = 1.0 - (2.0 * i + 1.0) / per_shell;
      const double s = std::sqrt(1 - z * z);
      m.gaussians.push_back(blob(center + r * Vec3(s * std::cos(golden * i), s * std::sin(golden * i), z),
                                 0.15 * radius, 0.9, Rgb::Ones()));
    }
  }
  return m;
}

shadow::ShadowMap uniform_map(double t, int res = 8, double extent = 4.0) {
  shadow::ShadowMap m;
  m.res = res;
  m.extent = extent;
  m.transmittance.assign(static_cast<std::size_t>(res) * res, t);
  return m;
}

// Ground layer of flat receivers plus a few Gaussians well above it.
splat::GaussianModel receiver_scene() {
  splat::GaussianModel m;
  for (int i = -3; i <= 3; ++i) {
    for (int j = -3; j <= 3; ++j) {
      m.gaussians.push_back(srl::testing::surfel(Vec3(0.2 * i, 0.2 * j, 0.0), Vec3::UnitZ(), 0.05, 1.0,
                                                 Rgb(0.4, 0.5, 0.6)));
    }
  }
  m.gaussians.push_back(blob(Vec3(0, 0, 1.0), 0.05, 1.0, Rgb(0.4, 0.5, 0.6)));
  return m;
}

}  // namespace

TEST(DominantLobes, SingleBrightTexel) {
  for (const Vec3& dir : {Vec3(0, 0, 1), spherical(50, 30), spherical(100, 250)}) {
    const auto result = shadow::dominant_lobes(single_texel(dir));
    ASSERT_TRUE(result.found());
    ASSERT_EQ(result.lobes.size(), 1u);
    EXPECT_EQ(result.status, "ok");
    EXPECT_LT(angle_degrees(result.lobes[0].direction, dir), 5.0);
    EXPECT_DOUBLE_EQ(result.lobes[0].weight, 1.0);
    EXPECT_GT(result.lobes[0].intensity, 0.0);
  }
}

TEST(DominantLobes, AntipodalPeaksAgreeWithDenseOracle) {
  const Vec3 peak = spherical(90, 0);
  env::EquirectMap map(64);
  for (const Vec3& d : {peak, Vec3(-peak)}) {
    const auto uv = env::dir_to_uv(d, map.width(), map.height());
    map.set_texel(static_cast<int>(uv.u) % map.width(), static_cast<int>(uv.v), Rgb::Constant(500.0));
  }
  shadow::LobeOptions opt;
  opt.count = 2;
  const auto result = shadow::dominant_lobes(map, opt);
  ASSERT_EQ(result.lobes.size(), 2u);

  // Oracle: brute-force maximum of the degree-2 smoothed luminance on a
  // 1000 x 2000 grid, restricted to each hemisphere.
  const auto coeffs = env::envmap_to_sh(map, 2, env::texel_grid_samples(64, 2));
  Vec3 best[2];
  double best_v[2] = {-1e300, -1e300};
  for (int i = 0; i < 1000; ++i) {
    for (int j = 0; j < 2000; ++j) {
      const Vec3 d = env::uv_to_dir(j + 0.5, i + 0.5, 2000, 1000);
      const double v = sh::reconstruct(coeffs, d).matrix().dot(Vec3(0.2126, 0.7152, 0.0722));
      const int side = d.dot(peak) >= 0.0 ? 0 : 1;
      if (v > best_v[side]) {
        best_v[side] = v;
        best[side] = d;
      }
    }
  }
  for (const auto& lobe : result.lobes) {
    const int side = lobe.direction.dot(peak) >= 0.0 ? 0 : 1;
    EXPECT_LT(angle_degrees(lobe.direction, best[side]), 5.0);
    EXPECT_LT(angle_degrees(lobe.direction, side == 0 ? peak : Vec3(-peak)), 5.0);
  }
  EXPECT_NE(result.lobes[0].direction.dot(peak) >= 0.0, result.lobes[1].direction.dot(peak) >= 0.0);
  EXPECT_NEAR(result.lobes[0].weight, 0.5, 0.025);
  EXPECT_NEAR(result.lobes[0].weight + result.lobes[1].weight, 1.0, 1e-12);
}

TEST(DominantLobes, ConstantMapHasNoLobe) {
  const auto result = shadow::dominant_lobes(env::EquirectMap(32, Rgb::Constant(2.0)));
  EXPECT_FALSE(result.found());
  EXPECT_EQ(result.status, "no dominant lobe");
  EXPECT_FALSE(shadow::dominant_lobes(env::EquirectMap(32)).found());
}

TEST(DominantLobes, WeightsSumToOne) {
  const auto map = map_from(64, [](const Vec3& d) {
    const double a = std::pow(std::max(d.dot(spherical(30, 0)), 0.0), 40);
    const double b = 0.5 * std::pow(std::max(d.dot(spherical(100, 180)), 0.0), 40);
    const double c = 0.3 * std::pow(std::max(d.dot(spherical(120, 80)), 0.0), 40);
    return Rgb::Constant(0.05 + a + b + c);
  });
  shadow::LobeOptions opt;
  opt.count = 3;
  const auto result = shadow::dominant_lobes(map, opt);
  ASSERT_FALSE(result.lobes.empty());
  double total = 0.0;
  for (std::size_t i = 0; i < result.lobes.size(); ++i) {
    total += result.lobes[i].weight;
    EXPECT_NEAR(result.lobes[i].direction.norm(), 1.0, 1e-12);
    for (std::size_t j = 0; j < i; ++j) {
      EXPECT_GT(angle_degrees(result.lobes[i].direction, result.lobes[j].direction), 30.0);
      EXPECT_LE(result.lobes[i].intensity, result.lobes[j].intensity);
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(DominantLobes, FollowsAzimuthRotation) {
  const Vec3 dir = spherical(40, 20);
  const auto map = single_texel(dir, 128);
  const Vec3 base = shadow::dominant_lobes(map).lobes.at(0).direction;
  for (double deg : {90.0, 180.0, 270.0}) {
    const Mat3 r = env::azimuth_rotation(deg * kPi / 180.0);
    const auto rotated = shadow::dominant_lobes(env::rotate_equirect(map, r));
    ASSERT_TRUE(rotated.found());
    EXPECT_LT(angle_degrees(rotated.lobes[0].direction, r * base), 5.0) << deg;
  }
}

TEST(DominantLobes, RejectsBadOptions) {
  shadow::LobeOptions opt;
  opt.count = 0;
  EXPECT_THROW(shadow::dominant_lobes(env::EquirectMap(16), opt), ArgumentError);
}

TEST(ProjectShadow, EmptyObjectIsFullyLit) {
  const auto map = shadow::project_shadow(splat::GaussianModel{}, {}, {}, {32, 2.0, std::nullopt});
  ASSERT_EQ(map.transmittance.size(), 32u * 32u);
  for (double t : map.transmittance) EXPECT_EQ(t, 1.0);
  EXPECT_FALSE(map.shadow_centroid().has_value());
}

TEST(ProjectShadow, OverheadLightGivesCentralRadialShadow) {
  splat::GaussianModel m;
  m.gaussians.push_back(blob(Vec3(0, 0, 1), 0.2, 1.0, Rgb::Ones()));
  shadow::ProjectionOptions opt;
  opt.res = 65;
  opt.extent = 2.0;
  const auto map = shadow::project_shadow(m, {Vec3::UnitZ(), 1.0, 1.0}, {}, opt);
  EXPECT_LT((map.darkest_texel() - Vec3::Zero()).norm(), 1e-9);
  EXPECT_LT(map.at(32, 32), 0.05);
  for (int x = 33; x < 64; ++x) EXPECT_GE(map.at(x, 32), map.at(x - 1, 32));
  for (int y = 33; y < 64; ++y) EXPECT_GE(map.at(32, y), map.at(32, y - 1));
  EXPECT_GT(map.at(64, 32), 0.9);
  for (double t : map.transmittance) {
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
  }
}

TEST(ProjectShadow, ObliqueLightOnTiltedPlane) {
  const Vec3 center(0.3, -0.2, 1.5);
  const auto object = ball(center, 0.4, 200);
  shadow::ReceiverPlane plane{Vec3(0, 0, -0.2), Vec3(0.2, 0.1, 1.0).normalized()};
  for (const Vec3& light : {spherical(40, 30), spherical(55, 200), spherical(20, 300)}) {
    const auto map = shadow::project_shadow(object, {light, 1.0, 1.0}, plane);
    // Line-plane intersection of the ray from the center away from the light.
    const double t = plane.signed_distance(center) / light.dot(plane.normal);
    const Vec3 expected = center - t * light;
    const auto centroid = map.shadow_centroid();
    ASSERT_TRUE(centroid.has_value());
    EXPECT_LT((*centroid - expected).norm(), 0.05 * map.extent);
    EXPECT_NEAR(plane.signed_distance(*centroid), 0.0, 1e-9);
  }
}

TEST(ProjectShadow, IgnoresOccludersBelowThePlane) {
  splat::GaussianModel m;
  m.gaussians.push_back(blob(Vec3(0, 0, -1), 0.2, 1.0, Rgb::Ones()));
  const auto map = shadow::project_shadow(m, {Vec3::UnitZ(), 1.0, 1.0}, {}, {16, 2.0, Vec3::Zero()});
  for (double t : map.transmittance) EXPECT_EQ(t, 1.0);
}

TEST(ProjectShadow, GrazingLightIsRejected) {
  splat::GaussianModel m;
  m.gaussians.push_back(blob(Vec3(0, 0, 1), 0.2, 1.0, Rgb::Ones()));
  EXPECT_THROW(shadow::project_shadow(m, {spherical(87, 10), 1.0, 1.0}, {}), ArgumentError);
  EXPECT_NO_THROW(shadow::project_shadow(m, {spherical(80, 10), 1.0, 1.0}, {}));
  EXPECT_THROW(shadow::project_shadow(m, {Vec3::UnitZ(), 1.0, 1.0}, {Vec3::Zero(), Vec3(0, 0, 2)}),
               ArgumentError);
}

TEST(ProjectShadow, SampleIsBilinearAndOneOutside) {
  auto map = uniform_map(1.0, 2, 2.0);
  map.transmittance = {0.0, 1.0, 0.5, 1.0};
  EXPECT_NEAR(map.sample(Vec3(-0.5, -0.5, 3.0)), 0.0, 1e-12);  // texel center, height ignored
  EXPECT_NEAR(map.sample(Vec3(0.0, -0.5, 0.0)), 0.5, 1e-12);
  EXPECT_NEAR(map.sample(Vec3(-0.5, 0.0, 0.0)), 0.25, 1e-12);
  EXPECT_EQ(map.sample(Vec3(1.5, 0.0, 0.0)), 1.0);
}

TEST(Bake, UnitTransmittanceAndZeroStrengthAreNoOps) {
  const auto scene = receiver_scene();
  const std::vector<shadow::LightLobe> lobes = {{Vec3::UnitZ(), 1.0, 1.0}};
  const auto lit = shadow::bake(scene, {uniform_map(1.0)}, lobes, 1.0);
  const auto weak = shadow::bake(scene, {uniform_map(0.0)}, lobes, 0.0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    EXPECT_EQ(lit.model.gaussians[i].sh.data(), scene.gaussians[i].sh.data());
    EXPECT_EQ(weak.model.gaussians[i].sh.data(), scene.gaussians[i].sh.data());
  }
}

TEST(Bake, HalfTransmittanceHalvesReceivers) {
  const auto scene = receiver_scene();
  const auto result = shadow::bake(scene, {uniform_map(0.5)}, {{Vec3::UnitZ(), 1.0, 1.0}}, 1.0);
  EXPECT_EQ(result.receivers, 49u);
  EXPECT_DOUBLE_EQ(result.band, 0.1);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto& a = scene.gaussians[i];
    const auto& b = result.model.gaussians[i];
    const double factor = i < 49 ? 0.5 : 1.0;  // the last one sits far above the plane
    EXPECT_LT((b.sh.data() - factor * a.sh.data()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(a.position, b.position);
    EXPECT_EQ(a.rotation.coeffs(), b.rotation.coeffs());
    EXPECT_EQ(a.scale, b.scale);
    EXPECT_EQ(a.opacity, b.opacity);
  }
}

TEST(Bake, CompositesLobesWithWeights) {
  const auto scene = receiver_scene();
  const std::vector<shadow::LightLobe> lobes = {{Vec3::UnitZ(), 3.0, 0.75}, {Vec3::UnitX(), 1.0, 0.25}};
  const auto result = shadow::bake(scene, {uniform_map(0.2), uniform_map(1.0)}, lobes, 0.5);
  const double a = 0.75 * 0.2 + 0.25;
  const double factor = 1.0 - 0.5 * (1.0 - a);
  EXPECT_NEAR(result.model.gaussians[0].sh(0, 0), factor * scene.gaussians[0].sh(0, 0), 1e-12);
}

TEST(Bake, ExcludedAndOutOfBandGaussiansAreUntouched) {
  const auto scene = receiver_scene();
  shadow::BakeOptions opt;
  opt.exclude = {0, 5};
  opt.band = 2.0;
  const auto result = shadow::bake(scene, {uniform_map(0.0)}, {{Vec3::UnitZ(), 1.0, 1.0}}, 1.0, opt);
  EXPECT_EQ(result.receivers, scene.size() - 2);
  EXPECT_EQ(result.model.gaussians[0].sh.data(), scene.gaussians[0].sh.data());
  EXPECT_EQ(result.model.gaussians[5].sh.data(), scene.gaussians[5].sh.data());
  EXPECT_EQ(result.model.gaussians[1].sh.data().cwiseAbs().maxCoeff(), 0.0);
  opt.exclude = {1000};
  EXPECT_THROW(shadow::bake(scene, {uniform_map(0.0)}, {{Vec3::UnitZ(), 1.0, 1.0}}, 1.0, opt), ArgumentError);
}

TEST(Bake, RejectsMismatchedInputs) {
  const auto scene = receiver_scene();
  EXPECT_THROW(shadow::bake(scene, {uniform_map(0.5)}, {}, 1.0), ArgumentError);
  EXPECT_THROW(shadow::bake(scene, {uniform_map(0.5)}, {{}}, 1.5), ArgumentError);
}

TEST(ShadowPng, RoundTripsThroughGrayscale) {
  srl::testing::TempDir dir;
  auto map = uniform_map(1.0, 4, 1.0);
  map.transmittance = {0.0, 0.25, 0.5, 1.0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  shadow::write_shadow_png(map, dir / "s.png");
  const Image img = io::read_png(dir / "s.png");
  ASSERT_EQ(img.width(), 4);
  // Stored without the sRGB curve; read_png decodes it.
  EXPECT_NEAR(io::linear_to_srgb(img.at(1, 0, 0)), 0.25, 1.0 / 255);
  EXPECT_NEAR(io::linear_to_srgb(img.at(2, 0, 0)), 0.5, 1.0 / 255);
  EXPECT_NEAR(img.at(3, 3, 0), 1.0, 1e-6);
}
