#pragma once

// End-to-end orchestration used by the command-line tool:
// segment -> place -> capture both environments -> relight -> merge ->
// shadow bake -> render.

#include <string>
#include <vector>

#include "json.hpp"
#include "srl/config.hpp"
#include "srl/segmentation.hpp"
#include "srl/shadow.hpp"
#include "srl/transfer.hpp"

namespace srl::pipeline {

using Json = nlohmann::ordered_json;

class StageLog {
 public:
  void record(const std::string& name, double seconds);
  const Json& stages() const { return stages_; }
  double total() const { return total_; }

 private:
  Json stages_ = Json::array();
  double total_ = 0.0;
};

// Cube capture around `center` resampled to an equirect map. Uncovered
// directions get the background (mean of covered ones when unset). With
// settings.hdr the map is clamped to [0, 1] and expanded with ldr_to_hdr.
env::EquirectMap capture_environment(const splat::GaussianModel& scene, const Vec3& center,
                                     const config::CaptureSettings& settings,
                                     const std::vector<std::size_t>& exclude = {});

struct SourceSplit {
  splat::GaussianModel object;
  splat::GaussianModel remainder;
  std::vector<std::size_t> object_indices;
  std::string method;  // "masks", "scores" or "whole-model"
};

// Masks when configured, else stored scores, else the whole model is the
// object. Throws StateError when the object comes out empty.
SourceSplit split_source(const splat::GaussianModel& source, const config::PipelineConfig& config);

// Horizontal plane through the lowest Gaussian mean.
shadow::ReceiverPlane default_receiver_plane(const splat::GaussianModel& object);

struct RunOptions {
  bool skip_shadows = false;
  bool relight_only = false;  // stop after relighting; no merge or shadows
};

struct PipelineResult {
  splat::GaussianModel relit_object;  // placed and relit
  splat::GaussianModel merged;        // empty when relight_only
  std::vector<std::size_t> object_indices;  // into merged
  env::EquirectMap source_env;        // rotated with the placement
  env::EquirectMap target_env;
  transfer::TransferStats transfer_stats;
  shadow::LobeResult lobes;
  std::vector<shadow::ShadowMap> shadow_maps;
  std::vector<Image> renders;
  Json diagnostics;
};

PipelineResult run(const config::PipelineConfig& config, const RunOptions& options = {});

// relit_object.ply, merged.ply, source_env.hdr, target_env.hdr,
// shadow_<k>.png, render_<k>.png, transfer_stats.jsonl, diagnostics.json.
void write_outputs(const PipelineResult& result, const std::filesystem::path& dir);

}  // namespace srl::pipeline
