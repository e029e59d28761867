#pragma once

// Stock 3DGS binary PLY (binary_little_endian 1.0, one "vertex" element).
//
// Properties: x y z nx ny nz f_dc_0..2 f_rest_0..(3*(K-1)-1) opacity
// scale_0..2 rot_0..3, with K = (l_max+1)^2. f_rest is channel-major:
// f_rest_{c*(K-1) + (k-1)} is coefficient k of channel c. Scales are stored
// as natural logs, opacity as a logit, rotations as (w, x, y, z) and are
// normalized on load. Files with only scale_0 and scale_1 are read as 2D
// surfels with a thin third axis. An optional float "label" carries the
// segmentation score. Any other float property (nx, ny, nz included) is kept
// as an extra and written back in its original position.

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "srl/splat_model.hpp"

namespace srl::splat {

struct PlyReadOptions {
  // Keep unknown float properties as extras; when false they are skipped.
  bool keep_unknown = true;
  // Kind forced on the loaded model; detect_kind() decides otherwise.
  std::optional<ModelKind> kind;
};

GaussianModel parse_ply(std::span<const char> bytes, const PlyReadOptions& options = {});
GaussianModel load_ply(const std::filesystem::path& path, const PlyReadOptions& options = {});

// Throws ArgumentError for an empty model and IoError on write failures.
std::string serialize_ply(const GaussianModel& model);
void save_ply(const GaussianModel& model, const std::filesystem::path& path);

}  // namespace srl::splat
