#include "srl/pipeline.hpp"

#include <chrono>
#include <fmt/format.h>
#include <fstream>

#include "srl/error.hpp"
#include "srl/image_io.hpp"
#include "srl/ply.hpp"
#include "srl/raster.hpp"

namespace srl::pipeline {

namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Json stats_json(const transfer::TransferStats& s) {
  Json channels = Json::array();
  for (const auto& c : s.channels) {
    channels.push_back({{"ratios", c.ratios},
                        {"clamped_below", c.clamped_below},
                        {"clamped_above", c.clamped_above},
                        {"clamp_rate", c.clamp_rate()},
                        {"min_tau", c.min_tau},
                        {"max_tau", c.max_tau}});
  }
  return {{"gaussians", s.gaussians},
          {"low_confidence_normals", s.low_confidence_normals},
          {"channels", channels},
          {"seconds", s.seconds}};
}

env::EquirectMap load_env(const fs::path& path) { return env::EquirectMap(io::read_rgbe(path)); }

}  // namespace

void StageLog::record(const std::string& name, double seconds) {
  stages_.push_back({{"stage", name}, {"seconds", seconds}});
  total_ += seconds;
}

env::EquirectMap capture_environment(const splat::GaussianModel& scene, const Vec3& center,
                                     const config::CaptureSettings& settings,
                                     const std::vector<std::size_t>& exclude) {
  raster::CaptureOptions options;
  options.exclude = exclude;
  const env::CubeMap cube = raster::render_cubemap(scene, center, settings.face_res, options);
  env::EquirectMap map = env::cubemap_to_equirect(cube, settings.height);
  const Image alpha = env::cubemap_alpha_to_equirect(cube, settings.height);
  env::fill_missing(map, alpha, settings.background);
  if (!settings.hdr) return map;
  for (float& v : map.image().pixels()) v = std::clamp(v, 0.0f, 1.0f);
  return env::ldr_to_hdr(map, settings.ldr);
}

SourceSplit split_source(const splat::GaussianModel& source, const config::PipelineConfig& config) {
  SourceSplit split;
  splat::GaussianModel scored;
  if (config.segmentation_enabled()) {
    segment::MaskSet masks;
    masks.cameras = config::load_cameras(config.cameras);
    for (const auto& p : config.masks) masks.masks.push_back(io::read_mask_png(p));
    scored = segment::score(source, masks);
    split.method = "masks";
  } else if (source.has_scores()) {
    scored = source;
    split.method = "scores";
  } else {
    split.object = source;
    split.remainder = source.empty_like();
    split.object_indices.resize(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) split.object_indices[i] = i;
    split.method = "whole-model";
  }
  if (split.method != "whole-model") {
    segment::Partition p = segment::extract(scored, config.threshold);
    split.object = std::move(p.object);
    split.remainder = std::move(p.remainder);
    split.object_indices = std::move(p.object_indices);
  }
  if (split.object.empty()) throw StateError("object selection is empty; check masks or threshold");
  return split;
}

shadow::ReceiverPlane default_receiver_plane(const splat::GaussianModel& object) {
  if (object.empty()) throw ArgumentError("cannot place a receiver plane under an empty object");
  const Vec3 c = object.centroid();
  double lowest = c.z();
  for (const auto& g : object.gaussians) lowest = std::min(lowest, g.position.z());
  return {Vec3(c.x(), c.y(), lowest), Vec3::UnitZ()};
}

PipelineResult run(const config::PipelineConfig& config, const RunOptions& options) {
  const bool need_target_scene = !options.relight_only;
  config.validate(need_target_scene);
  if (config.render_cameras) config::load_cameras(*config.render_cameras);

  StageLog log;
  Stopwatch watch;
  PipelineResult result;

  const splat::GaussianModel source = splat::load_ply(config.source_model);
  std::optional<splat::GaussianModel> target;
  if (need_target_scene || !config.target_env) target = splat::load_ply(config.target_model);
  log.record("load", watch.lap());

  const SourceSplit split = split_source(source, config);
  log.record("segment", watch.lap());

  env::EquirectMap source_env;
  if (config.source_env) {
    source_env = load_env(*config.source_env);
  } else {
    if (split.method == "whole-model") {
      throw ValidationError("capturing the source environment needs masks, scores or input.source_env");
    }
    source_env = capture_environment(source, config.source_center.value_or(split.object.centroid()),
                                     config.capture, split.object_indices);
  }
  log.record("capture_source", watch.lap());

  const splat::GaussianModel placed = splat::transform_model(split.object, config.placement);
  if (!config.placement.rotation.isIdentity(0.0)) {
    source_env = env::rotate_equirect(source_env, config.placement.rotation);
  }
  log.record("transform", watch.lap());

  env::EquirectMap target_env;
  if (config.target_env) {
    target_env = load_env(*config.target_env);
  } else {
    target_env = capture_environment(*target, config.target_center.value_or(placed.centroid()),
                                     config.capture);
  }
  log.record("capture_target", watch.lap());

  transfer::RelightResult relit = transfer::relight(placed, source_env, target_env, config.transfer);
  log.record("relight", watch.lap());

  result.relit_object = std::move(relit.model);
  result.transfer_stats = relit.stats;
  result.source_env = std::move(source_env);
  result.target_env = std::move(target_env);

  Json shadow_json = {{"enabled", false}};
  if (!options.relight_only) {
    splat::MergeResult merged = splat::merge_models(result.relit_object, *target);
    result.object_indices = std::move(merged.object_indices);
    result.merged = std::move(merged.model);
    log.record("merge", watch.lap());

    if (config.shadow.enabled && !options.skip_shadows) {
      result.lobes = shadow::dominant_lobes(result.target_env, config.shadow.lobes);
      const shadow::ReceiverPlane plane =
          config.shadow.plane.value_or(default_receiver_plane(result.relit_object));
      shadow::ProjectionOptions projection;
      projection.res = config.shadow.res;
      projection.extent = config.shadow.extent;
      for (const auto& lobe : result.lobes.lobes) {
        result.shadow_maps.push_back(shadow::project_shadow(result.relit_object, lobe, plane, projection));
      }
      shadow::BakeOptions bake_options;
      bake_options.band = config.shadow.band;
      bake_options.exclude = result.object_indices;
      shadow::BakeResult baked = shadow::bake(result.merged, result.shadow_maps, result.lobes.lobes,
                                              config.shadow.strength, bake_options);
      result.merged = std::move(baked.model);
      Json lobes = Json::array();
      for (const auto& l : result.lobes.lobes) {
        lobes.push_back({{"direction", vec_json(l.direction)}, {"intensity", l.intensity}, {"weight", l.weight}});
      }
      shadow_json = {{"enabled", true},
                     {"status", result.lobes.status},
                     {"lobes", lobes},
                     {"plane_point", vec_json(plane.point)},
                     {"plane_normal", vec_json(plane.normal)},
                     {"strength", config.shadow.strength},
                     {"band", baked.band},
                     {"receivers", baked.receivers}};
      log.record("shadows", watch.lap());
    }

    if (config.render_cameras) {
      for (const auto& camera : config::load_cameras(*config.render_cameras)) {
        result.renders.push_back(raster::render(result.merged, camera).color);
      }
      log.record("render", watch.lap());
    }
  }

  result.diagnostics = {
      {"seed", config.seed},
      {"segmentation", {{"method", split.method}, {"object", split.object.size()},
                        {"remainder", split.remainder.size()}, {"threshold", config.threshold}}},
      {"transfer", stats_json(result.transfer_stats)},
      {"shadow", shadow_json},
      {"stages", log.stages()},
      {"total_seconds", log.total()}};
  return result;
}

void write_outputs(const PipelineResult& result, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  splat::save_ply(result.relit_object, dir / "relit_object.ply");
  if (!result.merged.empty()) splat::save_ply(result.merged, dir / "merged.ply");
  io::write_rgbe(result.source_env.image(), dir / "source_env.hdr");
  io::write_rgbe(result.target_env.image(), dir / "target_env.hdr");
  for (std::size_t k = 0; k < result.shadow_maps.size(); ++k) {
    shadow::write_shadow_png(result.shadow_maps[k], dir / fmt::format("shadow_{}.png", k));
  }
  for (std::size_t k = 0; k < result.renders.size(); ++k) {
    io::write_png(result.renders[k], dir / fmt::format("render_{}.png", k));
  }
  const auto write_text = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  };
  write_text(dir / "transfer_stats.jsonl", transfer::stats_to_jsonl(result.transfer_stats));
  write_text(dir / "diagnostics.json", result.diagnostics.dump(2) + "\n");
}

}  // namespace srl::pipeline
