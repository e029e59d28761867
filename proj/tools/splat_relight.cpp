// splat-relight: command-line front end.

#include <CLI11.hpp>
#include <chrono>
#include <fmt/format.h>
#include <fstream>
#include <random>

#include "json.hpp"
#include "srl/config.hpp"
#include "srl/error.hpp"
#include "srl/image_io.hpp"
#include "srl/oracle.hpp"
#include "srl/pipeline.hpp"
#include "srl/ply.hpp"
#include "srl/raster.hpp"
#include "srl/segmentation.hpp"
#include "srl/shadow.hpp"
#include "srl/transfer.hpp"

namespace fs = std::filesystem;
using namespace srl;
using Json = nlohmann::ordered_json;

namespace {

void log(const std::string& line) { fmt::print(stderr, "{}\n", line); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
}

Vec3 to_vec3(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

env::EquirectMap load_env(const fs::path& path) { return env::EquirectMap(io::read_rgbe(path)); }

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ArgumentError(fmt::format("--set expects key=value, got '{}'", s));
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct CaptureArgs {
  std::string model, output;
  std::vector<double> center, background;
  int face_res = 256, height = 256;
  bool no_hdr = false;
  double gamma = env::LdrToHdrParams{}.gamma;
  double boost = env::LdrToHdrParams{}.boost;
  double knee = env::LdrToHdrParams{}.knee;
};

void cmd_capture(const CaptureArgs& a) {
  const auto model = splat::load_ply(a.model);
  config::CaptureSettings s;
  s.face_res = a.face_res;
  s.height = a.height;
  s.hdr = !a.no_hdr;
  s.ldr = {a.gamma, a.boost, a.knee};
  if (!a.background.empty()) s.background = Rgb(a.background[0], a.background[1], a.background[2]);
  if (s.face_res < 1 || s.height < 2) throw ArgumentError("capture resolution too small");
  const Vec3 center = a.center.empty() ? model.centroid() : to_vec3(a.center);
  const auto start = std::chrono::steady_clock::now();
  const auto map = pipeline::capture_environment(model, center, s);
  io::write_rgbe(map.image(), a.output);
  log(fmt::format("captured {}x{} map at ({:.3f}, {:.3f}, {:.3f}) in {:.2f} s", map.width(), map.height(),
                  center.x(), center.y(), center.z(), seconds_since(start)));
}

struct FitArgs {
  std::string env, output, render;
  int l_max = 3, samples = 5000, render_height = 128;
  std::string strategy = "equal-area";
  std::uint64_t seed = 0;
};

void cmd_fit(const FitArgs& a) {
  const auto map = load_env(a.env);
  const auto samples = env::sample_sphere(a.samples, config::parse_strategy(a.strategy), a.seed, a.l_max);
  const sh::Projector projector(samples, a.l_max);
  const auto coeffs = projector.apply(env::lookup(map, samples));
  Json rows = Json::array();
  for (int k = 0; k < coeffs.size(); ++k) rows.push_back({coeffs(k, 0), coeffs(k, 1), coeffs(k, 2)});
  const Json out = {{"l_max", a.l_max},
                    {"samples", a.samples},
                    {"strategy", a.strategy},
                    {"seed", a.seed},
                    {"condition_number", projector.condition_number()},
                    {"coefficients", rows}};
  if (a.output.empty()) {
    fmt::print("{}\n", out.dump(2));
  } else {
    write_text(a.output, out.dump(2) + "\n");
  }
  if (!a.render.empty()) io::write_rgbe(env::sh_to_envmap(coeffs, a.render_height).image(), a.render);
}

struct RelightArgs {
  std::string config, model, source_env, target_env, output, output_dir, stats, diagnostics;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  transfer::TransferParams params;
  bool no_shading = false;
  std::string strategy = "equal-area";
};

void cmd_relight(const RelightArgs& a) {
  if (!a.config.empty()) {
    auto overrides = parse_overrides(a.sets);
    if (a.seed) overrides["seed"] = std::to_string(*a.seed);
    if (!a.output_dir.empty()) overrides["input.output_dir"] = a.output_dir;
    const auto cfg = config::load_config(a.config, overrides);
    const auto result = pipeline::run(cfg, {.relight_only = true});
    pipeline::write_outputs(result, cfg.output_dir);
    log(fmt::format("relit {} Gaussians in {:.2f} s (total {:.2f} s); outputs in {}", result.transfer_stats.gaussians,
                    result.transfer_stats.seconds, result.diagnostics["total_seconds"].get<double>(),
                    cfg.output_dir.string()));
    return;
  }
  if (a.model.empty() || a.source_env.empty() || a.target_env.empty() || a.output.empty()) {
    throw ArgumentError("relight needs --config, or --model, --source-env, --target-env and --output");
  }
  transfer::TransferParams params = a.params;
  params.per_gaussian_shading = !a.no_shading;
  params.strategy = config::parse_strategy(a.strategy);
  params.seed = a.seed.value_or(0);
  params.validate();
  const auto model = splat::load_ply(a.model);
  const auto source = load_env(a.source_env);
  const auto target = load_env(a.target_env);
  const auto result = transfer::relight(model, source, target, params);
  splat::save_ply(result.model, a.output);
  const std::string stats = transfer::stats_to_jsonl(result.stats);
  if (!a.stats.empty()) write_text(a.stats, stats);
  if (!a.diagnostics.empty()) {
    const Json diag = {{"seed", params.seed},
                       {"gaussians", result.stats.gaussians},
                       {"low_confidence_normals", result.stats.low_confidence_normals},
                       {"seconds", result.stats.seconds},
                       {"transfer", Json::parse(stats.substr(stats.rfind('{')))}};
    write_text(a.diagnostics, diag.dump(2) + "\n");
  }
  log(fmt::format("relit {} Gaussians in {:.2f} s ({} low-confidence normals)", result.stats.gaussians,
                  result.stats.seconds, result.stats.low_confidence_normals));
}

struct ShadowArgs {
  std::string scene, object, env, output, maps_dir;
  std::vector<double> plane_point, plane_normal;
  int lobes = 1, res = shadow::kDefaultShadowRes;
  double strength = 0.7, extent = 0.0, band = 0.0;
};

void cmd_shadows(const ShadowArgs& a) {
  if (a.plane_point.empty() != a.plane_normal.empty()) {
    throw ArgumentError("--plane-point and --plane-normal go together");
  }
  const auto scene = splat::load_ply(a.scene);
  const auto object = splat::load_ply(a.object);
  const auto map = load_env(a.env);
  shadow::LobeOptions lobe_options;
  lobe_options.count = a.lobes;
  const auto lobes = shadow::dominant_lobes(map, lobe_options);
  shadow::ReceiverPlane plane = pipeline::default_receiver_plane(object);
  if (!a.plane_point.empty()) {
    const Vec3 n = to_vec3(a.plane_normal);
    if (!(n.norm() > 0.0)) throw ArgumentError("--plane-normal must be nonzero");
    plane = {to_vec3(a.plane_point), n.normalized()};
  }
  shadow::ProjectionOptions projection;
  projection.res = a.res;
  projection.extent = a.extent;
  std::vector<shadow::ShadowMap> maps;
  for (const auto& lobe : lobes.lobes) maps.push_back(shadow::project_shadow(object, lobe, plane, projection));
  shadow::BakeOptions bake_options;
  bake_options.band = a.band;
  const auto baked = shadow::bake(scene, maps, lobes.lobes, a.strength, bake_options);
  splat::save_ply(baked.model, a.output);
  if (!a.maps_dir.empty()) {
    fs::create_directories(a.maps_dir);
    for (std::size_t k = 0; k < maps.size(); ++k) {
      shadow::write_shadow_png(maps[k], fs::path(a.maps_dir) / fmt::format("shadow_{}.png", k));
    }
  }
  for (const auto& l : lobes.lobes) {
    log(fmt::format("lobe ({:.3f}, {:.3f}, {:.3f}) weight {:.3f}", l.direction.x(), l.direction.y(), l.direction.z(),
                    l.weight));
  }
  log(fmt::format("{}; {} receivers within {:.4f} of the plane", lobes.status, baked.receivers, baked.band));
}

struct SegmentArgs {
  std::string model, cameras, scored, object, remainder;
  std::vector<std::string> masks;
  double threshold = segment::kDefaultThreshold;
};

void cmd_segment(const SegmentArgs& a) {
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw ArgumentError("threshold must lie in [0, 1]");
  for (const auto& m : a.masks) {
    if (!fs::is_regular_file(m)) throw ValidationError(fmt::format("mask not found: {}", m));
  }
  const auto model = splat::load_ply(a.model);
  segment::MaskSet set;
  set.cameras = config::load_cameras(a.cameras);
  for (const auto& m : a.masks) set.masks.push_back(io::read_mask_png(m));
  const auto scored = segment::score(model, set);
  const auto part = segment::extract(scored, a.threshold);
  if (!a.scored.empty()) splat::save_ply(scored, a.scored);
  if (!a.object.empty()) {
    if (part.object.empty()) throw StateError("no Gaussian scored above the threshold");
    splat::save_ply(part.object, a.object);
  }
  if (!a.remainder.empty() && !part.remainder.empty()) splat::save_ply(part.remainder, a.remainder);
  log(fmt::format("{} of {} Gaussians above {}", part.object.size(), model.size(), a.threshold));
}

struct RenderArgs {
  std::string model, cameras, output_dir = ".";
  std::vector<double> background;
};

void cmd_render(const RenderArgs& a) {
  const auto model = splat::load_ply(a.model);
  const auto cameras = config::load_cameras(a.cameras);
  raster::RenderOptions options;
  if (!a.background.empty()) options.background = Rgb(a.background[0], a.background[1], a.background[2]);
  fs::create_directories(a.output_dir);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    io::write_png(raster::render(model, cameras[k], options).color,
                  fs::path(a.output_dir) / fmt::format("render_{}.png", k));
  }
  log(fmt::format("rendered {} views in {:.2f} s", cameras.size(), seconds_since(start)));
}

struct InsertArgs {
  std::string object, scene, placement, output;
};

void cmd_insert(const InsertArgs& a) {
  const auto object = splat::load_ply(a.object);
  const auto scene = splat::load_ply(a.scene);
  const splat::Placement p = a.placement.empty() ? splat::Placement{} : config::load_placement(a.placement);
  const auto merged = splat::merge_models(splat::transform_model(object, p), scene);
  splat::save_ply(merged.model, a.output);
  log(fmt::format("inserted {} Gaussians into a scene of {}", object.size(), scene.size()));
}

struct PipelineArgs {
  std::string config, output_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool skip_shadows = false;
};

void cmd_pipeline(const PipelineArgs& a) {
  auto overrides = parse_overrides(a.sets);
  if (a.seed) overrides["seed"] = std::to_string(*a.seed);
  if (!a.output_dir.empty()) overrides["input.output_dir"] = a.output_dir;
  const auto cfg = config::load_config(a.config, overrides);
  const auto result = pipeline::run(cfg, {.skip_shadows = a.skip_shadows});
  pipeline::write_outputs(result, cfg.output_dir);
  for (const auto& stage : result.diagnostics["stages"]) {
    log(fmt::format("{:>16}: {:.2f} s", stage["stage"].get<std::string>(), stage["seconds"].get<double>()));
  }
  log(fmt::format("outputs in {}", cfg.output_dir.string()));
}

struct VerifyArgs {
  int trials = 10, normals = 64, l_max = 2, sphere_surfels = 2000;
  std::uint64_t seed = 1;
  std::string output;
};

// Returns true when every check is within tolerance.
bool cmd_verify(const VerifyArgs& a) {
  if (a.trials < 1 || a.normals < 1) throw ArgumentError("trials and normals must be positive");
  Json report;
  bool ok = true;

  double worst = 0.0, seconds = 0.0;
  for (int t = 0; t < a.trials; ++t) {
    const auto env = oracle::random_bandlimited_env(a.l_max, 64, a.seed + static_cast<std::uint64_t>(t)).map;
    const auto check = oracle::verify_product_formula(env, a.l_max, a.normals, a.seed + 1000 + t);
    worst = std::max(worst, check.max_relative_error);
    seconds += check.seconds;
  }
  report["product_formula"] = {{"trials", a.trials}, {"normals", a.normals}, {"l_max", a.l_max},
                               {"max_relative_error", worst}, {"seconds", seconds}, {"pass", worst < 0.02}};
  ok = ok && worst < 0.02;

  const auto start = std::chrono::steady_clock::now();
  const auto ls = oracle::random_bandlimited_env(a.l_max, 64, a.seed + 500).map;
  const auto lt = oracle::random_bandlimited_env(a.l_max, 64, a.seed + 501).map;
  const Rgb albedo(0.8, 0.6, 0.4);
  const auto sphere = oracle::make_lambertian_sphere(Vec3::Zero(), 1.0, albedo, ls, a.sphere_surfels);
  const auto relit = transfer::relight(sphere, ls, lt).model;
  const oracle::RadianceIntegrator integrator(lt);
  const Vec3 centroid = sphere.centroid();
  double mean = 0.0, max_err = 0.0;
  for (std::size_t i = 0; i < relit.size(); ++i) {
    const Vec3 n = splat::normal_of(sphere.gaussians[i], sphere.kind, centroid).normal;
    const Rgb expected = integrator.radiance({n, albedo});
    const Rgb got = relit.gaussians[i].sh.data().row(0).transpose() * (0.5 / std::sqrt(kPi));
    for (int c = 0; c < 3; ++c) {
      const double e = std::abs(got[c] - expected[c]) / expected[c];
      mean += e;
      max_err = std::max(max_err, e);
    }
  }
  mean /= 3.0 * static_cast<double>(relit.size());
  const bool sphere_ok = mean < 0.02 && max_err < 0.05;
  report["sphere_transfer"] = {{"surfels", a.sphere_surfels}, {"mean_relative_error", mean},
                               {"max_relative_error", max_err}, {"seconds", seconds_since(start)},
                               {"pass", sphere_ok}};
  ok = ok && sphere_ok;
  report["pass"] = ok;

  if (a.output.empty()) {
    fmt::print("{}\n", report.dump(2));
  } else {
    write_text(a.output, report.dump(2) + "\n");
  }
  return ok;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 4;  // includes ParseError
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const Error*>(&e)) return 2;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relight Gaussian splat objects and insert them into other scenes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "splat-relight 0.1.0");

  CaptureArgs capture;
  auto* c = app.add_subcommand("capture-env", "Render a cube map around a point and write an equirect .hdr");
  c->add_option("--model", capture.model, "Scene PLY")->required()->check(CLI::ExistingFile);
  c->add_option("-o,--output", capture.output, "Output .hdr")->required();
  c->add_option("--center", capture.center, "Capture point (default: scene centroid)")->expected(3);
  c->add_option("--face-res", capture.face_res, "Cube face resolution")->capture_default_str();
  c->add_option("--height", capture.height, "Equirect height (width is twice this)")->capture_default_str();
  c->add_option("--background", capture.background, "Fill for uncovered directions (default: mean)")->expected(3);
  c->add_flag("--no-hdr", capture.no_hdr, "Keep the rendered values; skip LDR to HDR expansion");
  c->add_option("--gamma", capture.gamma, "Inverse tone curve exponent")->capture_default_str();
  c->add_option("--boost", capture.boost, "Highlight boost")->capture_default_str();
  c->add_option("--knee", capture.knee, "Highlight knee")->capture_default_str();

  FitArgs fit;
  auto* f = app.add_subcommand("fit-sh", "Project an environment map onto spherical harmonics");
  f->add_option("--env", fit.env, "Input .hdr")->required()->check(CLI::ExistingFile);
  f->add_option("-o,--output", fit.output, "Coefficient JSON (default: stdout)");
  f->add_option("--l-max", fit.l_max, "Degree")->capture_default_str();
  f->add_option("--samples", fit.samples, "Sphere samples")->capture_default_str();
  f->add_option("--strategy", fit.strategy, "equal-area, sin-weighted or uniform-uv")->capture_default_str();
  f->add_option("--seed", fit.seed, "Sampling seed")->capture_default_str();
  f->add_option("--render", fit.render, "Also write the reconstruction as .hdr");
  f->add_option("--render-height", fit.render_height, "Height of the reconstruction")->capture_default_str();

  RelightArgs relight;
  auto* r = app.add_subcommand("relight", "Transfer an object from source to target lighting");
  r->add_option("--config", relight.config, "Pipeline config (segment, place, capture, relight)")
      ->check(CLI::ExistingFile);
  r->add_option("--set", relight.sets, "Config override section.key=value (repeatable)");
  r->add_option("--output-dir", relight.output_dir, "Overrides input.output_dir");
  r->add_option("--model", relight.model, "Object PLY (direct mode)");
  r->add_option("--source-env", relight.source_env, "Source lighting .hdr (direct mode)");
  r->add_option("--target-env", relight.target_env, "Target lighting .hdr (direct mode)");
  r->add_option("-o,--output", relight.output, "Relit PLY (direct mode)");
  r->add_option("--stats", relight.stats, "Ratio statistics, JSON lines (direct mode)");
  r->add_option("--diagnostics", relight.diagnostics, "Diagnostics JSON (direct mode)");
  r->add_option("--epsilon", relight.params.epsilon, "Ratio denominator offset")->capture_default_str();
  r->add_option("--tau-min", relight.params.tau_min, "Lower ratio clamp")->capture_default_str();
  r->add_option("--tau-max", relight.params.tau_max, "Upper ratio clamp")->capture_default_str();
  r->add_option("--l-max", relight.params.l_max, "Transfer degree")->capture_default_str();
  r->add_option("--samples", relight.params.n_samples, "Sphere samples")->capture_default_str();
  r->add_option("--strategy", relight.strategy, "equal-area, sin-weighted or uniform-uv")->capture_default_str();
  r->add_flag("--no-shading", relight.no_shading, "One global ratio instead of per-Gaussian shading");
  r->add_option("--seed", relight.seed, "Sampling seed");

  ShadowArgs shadows;
  auto* s = app.add_subcommand("shadows", "Bake an object's soft shadows into a scene");
  s->add_option("--scene", shadows.scene, "Receiving scene PLY")->required()->check(CLI::ExistingFile);
  s->add_option("--object", shadows.object, "Occluding object PLY")->required()->check(CLI::ExistingFile);
  s->add_option("--env", shadows.env, "Target lighting .hdr")->required()->check(CLI::ExistingFile);
  s->add_option("-o,--output", shadows.output, "Baked scene PLY")->required();
  s->add_option("--plane-point", shadows.plane_point, "Receiver plane point")->expected(3);
  s->add_option("--plane-normal", shadows.plane_normal, "Receiver plane normal")->expected(3);
  s->add_option("--lobes", shadows.lobes, "Number of light lobes")->capture_default_str();
  s->add_option("--strength", shadows.strength, "Shadow strength in [0, 1]")->capture_default_str();
  s->add_option("--res", shadows.res, "Shadow map resolution")->capture_default_str();
  s->add_option("--extent", shadows.extent, "Shadow map side length (0: automatic)")->capture_default_str();
  s->add_option("--band", shadows.band, "Receiver distance from the plane (0: automatic)")->capture_default_str();
  s->add_option("--maps-dir", shadows.maps_dir, "Write shadow_<k>.png here");

  SegmentArgs segment;
  auto* g = app.add_subcommand("segment", "Score Gaussians against 2D masks and split the model");
  g->add_option("--model", segment.model, "Scene PLY")->required()->check(CLI::ExistingFile);
  g->add_option("--cameras", segment.cameras, "Camera list")->required()->check(CLI::ExistingFile);
  g->add_option("--masks", segment.masks, "Mask PNGs, one per camera")->required();
  g->add_option("--threshold", segment.threshold, "Score threshold")->capture_default_str();
  g->add_option("--scored", segment.scored, "Model with scores in the label property");
  g->add_option("--object", segment.object, "Gaussians above the threshold");
  g->add_option("--remainder", segment.remainder, "Everything else");

  RenderArgs render;
  auto* v = app.add_subcommand("render", "Render a model from every camera of a list");
  v->add_option("--model", render.model, "Model PLY")->required()->check(CLI::ExistingFile);
  v->add_option("--cameras", render.cameras, "Camera list")->required()->check(CLI::ExistingFile);
  v->add_option("--output-dir", render.output_dir, "Directory for render_<k>.png")->capture_default_str();
  v->add_option("--background", render.background, "Background color")->expected(3);

  InsertArgs insert;
  auto* n = app.add_subcommand("insert", "Place an object into a scene");
  n->add_option("--object", insert.object, "Object PLY")->required()->check(CLI::ExistingFile);
  n->add_option("--scene", insert.scene, "Scene PLY")->required()->check(CLI::ExistingFile);
  n->add_option("--placement", insert.placement, "Placement file")->check(CLI::ExistingFile);
  n->add_option("-o,--output", insert.output, "Merged PLY")->required();

  PipelineArgs pipe;
  auto* p = app.add_subcommand("pipeline", "Segment, place, relight, merge, shadow and render");
  p->add_option("--config", pipe.config, "Pipeline config")->required()->check(CLI::ExistingFile);
  p->add_option("--set", pipe.sets, "Config override section.key=value (repeatable)");
  p->add_option("--output-dir", pipe.output_dir, "Overrides input.output_dir");
  p->add_option("--seed", pipe.seed, "Overrides the config seed");
  p->add_flag("--skip-shadows", pipe.skip_shadows, "Merge without baking shadows");

  VerifyArgs verify;
  auto* y = app.add_subcommand("verify", "Check the relighting math against the brute-force integrator");
  y->add_option("--trials", verify.trials, "Random environments")->capture_default_str();
  y->add_option("--normals", verify.normals, "Normals per environment")->capture_default_str();
  y->add_option("--l-max", verify.l_max, "Degree of the random environments")->capture_default_str();
  y->add_option("--surfels", verify.sphere_surfels, "Surfels of the test sphere")->capture_default_str();
  y->add_option("--seed", verify.seed, "Seed")->capture_default_str();
  y->add_option("-o,--output", verify.output, "Report JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c) cmd_capture(capture);
    if (*f) cmd_fit(fit);
    if (*r) cmd_relight(relight);
    if (*s) cmd_shadows(shadows);
    if (*g) cmd_segment(segment);
    if (*v) cmd_render(render);
    if (*n) cmd_insert(insert);
    if (*p) cmd_pipeline(pipe);
    if (*y && !cmd_verify(verify)) {
      log("verification failed");
      return 1;
    }
  } catch (const std::exception& e) {
    log(fmt::format("error: {}", e.what()));
    return exit_code(e);
  }
  return 0;
}
