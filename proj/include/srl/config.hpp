#pragma once

// Plain-text inputs: camera lists, placement files and the pipeline config.
//
// Camera list: one camera per line, 18 numbers
//   width height fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz
// with R, t the world-to-camera transform. Blank lines and lines starting
// with '#' are ignored.
//
// Placement file and pipeline config: INI style, `key = value` lines, values
// are whitespace separated lists, '#' or ';' start a comment line, sections
// in brackets. Unknown keys are errors. Relative paths are resolved against
// the directory of the file.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "srl/envmap.hpp"
#include "srl/raster.hpp"
#include "srl/shadow.hpp"
#include "srl/splat_model.hpp"
#include "srl/transfer.hpp"

namespace srl::config {

std::vector<raster::Camera> parse_cameras(const std::string& text);
std::vector<raster::Camera> load_cameras(const std::filesystem::path& path);
std::string format_cameras(const std::vector<raster::Camera>& cameras);

// Keys: rotation = w x y z (normalized on read), translation = x y z,
// scale = s.
splat::Placement parse_placement(const std::string& text);
splat::Placement load_placement(const std::filesystem::path& path);

env::SamplingStrategy parse_strategy(const std::string& name);
const char* to_string(env::SamplingStrategy strategy);

struct CaptureSettings {
  int face_res = 256;
  int height = 256;
  bool hdr = true;
  env::LdrToHdrParams ldr;
  // Fill for directions no splat covers; nullopt = mean of the covered ones.
  std::optional<Rgb> background;
};

struct ShadowSettings {
  bool enabled = true;
  shadow::LobeOptions lobes;
  // Default: horizontal plane (normal +z) through the lowest object mean.
  std::optional<shadow::ReceiverPlane> plane;
  double strength = 0.7;
  int res = shadow::kDefaultShadowRes;
  double extent = 0.0;
  double band = 0.0;
};

struct PipelineConfig {
  // [input]
  std::filesystem::path source_model;  // scene that holds the object
  std::filesystem::path target_model;  // scene receiving the object
  std::filesystem::path cameras;       // views aligned with masks
  std::vector<std::filesystem::path> masks;
  std::optional<std::filesystem::path> source_env;
  std::optional<std::filesystem::path> target_env;
  std::optional<std::filesystem::path> render_cameras;
  std::filesystem::path output_dir = "out";
  // [placement]
  splat::Placement placement;
  // [transfer]
  transfer::TransferParams transfer;
  // [segment]
  double threshold = 0.5;
  // [capture]
  CaptureSettings capture;
  std::optional<Vec3> source_center;
  std::optional<Vec3> target_center;
  // [shadow]
  ShadowSettings shadow;
  std::uint64_t seed = 0;

  bool segmentation_enabled() const { return !masks.empty(); }

  // Parameter ranges and file existence; throws ArgumentError or
  // ValidationError before any heavy work starts.
  void validate(bool require_target) const;
};

// `overrides` maps "section.key" (or "key" for top-level keys) to a value
// and wins over the file contents.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                            const std::map<std::string, std::string>& overrides = {});
PipelineConfig load_config(const std::filesystem::path& path,
                           const std::map<std::string, std::string>& overrides = {});

}  // namespace srl::config
