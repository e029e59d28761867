#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"
#include "srl/config.hpp"
#include "srl/error.hpp"
#include "srl/image_io.hpp"
#include "srl/oracle.hpp"
#include "srl/pipeline.hpp"
#include "srl/ply.hpp"
#include "support.hpp"

using namespace srl;
using srl::testing::surfel;
namespace fs = std::filesystem;

namespace {

// Inward-facing emissive surfels on a sphere of radius r around the origin.
template <typename F>
splat::GaussianModel enclosure(double r, int n, F&& radiance) {
  splat::GaussianModel m;
  m.kind = splat::ModelKind::kSurfel;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double spacing = r * std::sqrt(4 * kPi / n);
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double s = std::sqrt(1 - z * z);
    const Vec3 d(s * std::cos(golden * i), s * std::sin(golden * i), z);
    m.gaussians.push_back(surfel(r * d, -d, 0.7 * spacing, 1.0, radiance(d)));
  }
  return m;
}

void append(splat::GaussianModel& to, const splat::GaussianModel& from) {
  to.gaussians.insert(to.gaussians.end(), from.gaussians.begin(), from.gaussians.end());
}

// Floor of receivers at z = 0 under a top-lit sky.
splat::GaussianModel target_scene() {
  auto m = enclosure(8.0, 3000, [](const Vec3& d) { return d.z() > 0.8 ? Rgb(1.0, 0.9, 0.7) : Rgb::Constant(0.05); });
  for (int i = -15; i <= 15; ++i) {
    for (int j = -15; j <= 15; ++j) {
      m.gaussians.push_back(surfel(Vec3(0.1 * i, 0.1 * j, 0.0), Vec3::UnitZ(), 0.05, 1.0, Rgb(0.5, 0.5, 0.5)));
    }
  }
  return m;
}

struct Fixture {
  srl::testing::TempDir dir;
  oracle::TwoClusterScene scene = oracle::make_two_cluster_scene(64, 6, 96, 3);
  std::size_t floor_begin = 3000;

  Fixture() {
    splat::save_ply(scene.model, dir / "source.ply");
    splat::save_ply(target_scene(), dir / "target.ply");
    std::ofstream(dir / "cams.txt") << config::format_cameras(scene.cameras);
    std::ofstream(dir / "render_cams.txt") << config::format_cameras({scene.cameras[0]});
    for (std::size_t k = 0; k < scene.masks_a.size(); ++k) {
      io::write_mask_png(scene.masks_a[k], dir / ("mask" + std::to_string(k) + ".png"));
    }
    io::write_rgbe(oracle::random_bandlimited_env(2, 32, 5).map.image(), dir / "source.hdr");
  }

  std::string ini() const {
    std::string masks;
    for (std::size_t k = 0; k < scene.masks_a.size(); ++k) masks += " mask" + std::to_string(k) + ".png";
    return "seed = 3\n[input]\nsource_model = source.ply\ntarget_model = target.ply\ncameras = cams.txt\n"
           "masks =" + masks + "\nsource_env = source.hdr\nrender_cameras = render_cams.txt\n"
           "[placement]\ntranslation = 1.2 0 0.4\n"
           "[transfer]\nn_samples = 2000\n"
           "[capture]\nface_res = 32\nheight = 32\n"
           "[shadow]\nplane_point = 0 0 0\nplane_normal = 0 0 1\nstrength = 0.8\nres = 96\nband = 0.05\n";
  }

  config::PipelineConfig config(const std::map<std::string, std::string>& overrides = {}) const {
    std::ofstream(dir / "run.ini") << ini();
    return config::load_config(dir / "run.ini", overrides);
  }
};

}  // namespace

TEST(Pipeline, TwoClusterSceneEndToEnd) {
  Fixture f;
  const auto result = pipeline::run(f.config());
  EXPECT_EQ(result.diagnostics["segmentation"]["method"], "masks");
  ASSERT_EQ(result.relit_object.size(), f.scene.cluster_a.size());

  // Placement moved cluster A; relighting kept its geometry.
  const auto source = splat::load_ply(f.dir / "source.ply");
  for (std::size_t i = 0; i < result.relit_object.size(); ++i) {
    const auto& original = source.gaussians[f.scene.cluster_a[i]];
    EXPECT_LT((result.relit_object.gaussians[i].position - original.position - Vec3(1.2, 0, 0.4)).norm(), 1e-12);
    EXPECT_EQ(result.relit_object.gaussians[i].opacity, original.opacity);
    EXPECT_TRUE(result.relit_object.gaussians[i].sh.all_finite());
  }
  // Merged = target scene followed by the object.
  const auto target = splat::load_ply(f.dir / "target.ply");
  ASSERT_EQ(result.merged.size(), target.size() + result.relit_object.size());
  ASSERT_EQ(result.object_indices.front(), target.size());
  for (std::size_t k = 0; k < result.object_indices.size(); ++k) {
    EXPECT_EQ(result.merged.gaussians[result.object_indices[k]].sh.data(), result.relit_object.gaussians[k].sh.data());
  }
  // One lobe straight up; the floor right under the object is darkened,
  // the sky and far floor are not.
  ASSERT_TRUE(result.lobes.found());
  EXPECT_GT(result.lobes.lobes[0].direction.z(), 0.95);
  ASSERT_EQ(result.shadow_maps.size(), 1u);
  std::size_t darkened = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double before = target.gaussians[i].sh(0, 0);
    const double after = result.merged.gaussians[i].sh(0, 0);
    EXPECT_LE(after, before);
    if (after < before) {
      ++darkened;
      EXPECT_GE(i, f.floor_begin);
      EXPECT_LT(target.gaussians[i].position.head<2>().norm(), 1.2);
    }
  }
  EXPECT_GT(darkened, 20u);
  for (double t : result.shadow_maps[0].transmittance) {
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
  }
  ASSERT_EQ(result.renders.size(), 1u);
  EXPECT_TRUE(result.renders[0].all_finite());
  EXPECT_EQ(result.diagnostics["seed"], 3);
  EXPECT_EQ(result.diagnostics["shadow"]["lobes"].size(), 1u);
}

TEST(Pipeline, SkipShadowsEqualsPipelineMinusBake) {
  Fixture f;
  const auto cfg = f.config();
  const auto full = pipeline::run(cfg);
  const auto plain = pipeline::run(cfg, {.skip_shadows = true});
  EXPECT_TRUE(plain.shadow_maps.empty());
  EXPECT_EQ(plain.diagnostics["shadow"]["enabled"], false);
  shadow::BakeOptions opt;
  opt.band = cfg.shadow.band;
  opt.exclude = plain.object_indices;
  const auto baked = shadow::bake(plain.merged, full.shadow_maps, full.lobes.lobes, cfg.shadow.strength, opt);
  ASSERT_EQ(baked.model.size(), full.merged.size());
  for (std::size_t i = 0; i < full.merged.size(); ++i) {
    EXPECT_EQ(baked.model.gaussians[i].sh.data(), full.merged.gaussians[i].sh.data());
  }
}

TEST(Pipeline, Deterministic) {
  Fixture f;
  const auto a = pipeline::run(f.config(), {.skip_shadows = true});
  const auto b = pipeline::run(f.config(), {.skip_shadows = true});
  for (std::size_t i = 0; i < a.merged.size(); ++i) {
    ASSERT_EQ(a.merged.gaussians[i].sh.data(), b.merged.gaussians[i].sh.data());
  }
  EXPECT_EQ(a.renders[0].pixels(), b.renders[0].pixels());
}

TEST(Pipeline, MissingMaskFailsValidation) {
  Fixture f;
  fs::remove(f.dir / "mask2.png");
  EXPECT_THROW(pipeline::run(f.config()), ValidationError);
}

TEST(Pipeline, WholeModelNeedsSourceEnvironment) {
  Fixture f;
  auto cfg = f.config({{"input.masks", ""}});
  cfg.source_env.reset();
  EXPECT_THROW(pipeline::run(cfg), ValidationError);
}

TEST(Pipeline, CapturesSourceFromStoredScores) {
  Fixture f;
  // Object tagged by score inside a uniformly lit room.
  auto source = enclosure(8.0, 2000, [](const Vec3&) { return Rgb::Constant(0.5); });
  for (auto& g : source.gaussians) g.score = 0.0;
  auto object = f.scene.model;
  for (std::size_t i = 0; i < object.size(); ++i) object.gaussians[i].score = i < 64 ? 1.0 : 0.0;
  append(source, object);
  splat::save_ply(source, f.dir / "scored.ply");
  auto cfg = f.config({{"input.source_model", (f.dir / "scored.ply").string()}, {"input.masks", ""}});
  cfg.source_env.reset();
  cfg.capture.hdr = false;
  const auto result = pipeline::run(cfg, {.relight_only = true});
  EXPECT_EQ(result.diagnostics["segmentation"]["method"], "scores");
  EXPECT_EQ(result.relit_object.size(), 64u);
  EXPECT_TRUE(result.merged.empty());
  // Capture saw the uniform room (and the other cluster) but not the object.
  const Rgb mean = result.source_env.mean_radiance();
  EXPECT_NEAR(mean[0], 0.5, 0.05);
}

TEST(Pipeline, WriteOutputs) {
  Fixture f;
  const auto result = pipeline::run(f.config());
  srl::testing::TempDir out;
  pipeline::write_outputs(result, out.path() / "run");
  for (const char* name : {"relit_object.ply", "merged.ply", "source_env.hdr", "target_env.hdr", "shadow_0.png",
                           "render_0.png", "transfer_stats.jsonl", "diagnostics.json"}) {
    EXPECT_TRUE(fs::is_regular_file(out.path() / "run" / name)) << name;
  }
  std::ifstream in(out.path() / "run" / "diagnostics.json");
  const auto diag = nlohmann::json::parse(in);
  for (const char* key : {"seed", "segmentation", "transfer", "shadow", "stages", "total_seconds"}) {
    EXPECT_TRUE(diag.contains(key)) << key;
  }
  EXPECT_EQ(splat::load_ply(out.path() / "run" / "merged.ply").size(), result.merged.size());
}

TEST(CaptureEnvironment, EmptySceneGivesBackground) {
  config::CaptureSettings s;
  s.face_res = 8;
  s.height = 16;
  s.hdr = false;
  s.background = Rgb(0.2, 0.3, 0.4);
  const auto map = pipeline::capture_environment(splat::GaussianModel{}, Vec3::Zero(), s);
  for (int v = 0; v < 16; ++v) {
    for (int u = 0; u < 32; ++u) EXPECT_NEAR(map.texel(u, v)[2], 0.4, 1e-6);
  }
}

TEST(CaptureEnvironment, NoHdrSkipsExpansion) {
  const auto room = enclosure(5.0, 3000, srl::testing::smooth_radiance);
  config::CaptureSettings s;
  s.face_res = 16;
  s.height = 16;
  s.hdr = false;
  const auto ldr = pipeline::capture_environment(room, Vec3::Zero(), s);
  s.hdr = true;
  const auto hdr = pipeline::capture_environment(room, Vec3::Zero(), s);
  env::EquirectMap clamped = ldr;
  for (float& v : clamped.image().pixels()) v = std::clamp(v, 0.0f, 1.0f);
  EXPECT_EQ(env::ldr_to_hdr(clamped, s.ldr).image().pixels(), hdr.image().pixels());
  EXPECT_NE(ldr.image().pixels(), hdr.image().pixels());
}

TEST(DefaultReceiverPlane, LowestMean) {
  const auto scene = oracle::make_two_cluster_scene(4, 1, 16);
  auto model = scene.model;
  model.gaussians[2].position.z() = -0.7;
  const auto plane = pipeline::default_receiver_plane(model);
  EXPECT_EQ(plane.normal, Vec3::UnitZ());
  EXPECT_DOUBLE_EQ(plane.point.z(), -0.7);
  EXPECT_THROW(pipeline::default_receiver_plane(splat::GaussianModel{}), ArgumentError);
}
