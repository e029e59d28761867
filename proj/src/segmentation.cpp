#include "srl/segmentation.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "srl/error.hpp"

namespace srl::segment {

void MaskSet::validate() const {
  if (cameras.empty()) throw ArgumentError("mask set is empty");
  if (cameras.size() != masks.size()) {
    throw ArgumentError(fmt::format("{} cameras but {} masks", cameras.size(), masks.size()));
  }
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    cameras[k].validate();
    if (masks[k].width != cameras[k].width || masks[k].height != cameras[k].height) {
      throw ArgumentError(fmt::format("mask {} is {}x{} but its camera is {}x{}", k, masks[k].width,
                                      masks[k].height, cameras[k].width, cameras[k].height));
    }
  }
}

splat::GaussianModel score(const splat::GaussianModel& model, const MaskSet& masks) {
  masks.validate();
  const raster::MaskStats stats = raster::accumulate_mask_stats(model, masks.cameras, masks.masks);
  splat::GaussianModel out = model;
  double peak = 0.0;
  if (stats.denominator > 0.0) {
    for (double v : stats.numerator) peak = std::max(peak, v / stats.denominator);
  }
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double raw = stats.denominator > 0.0 ? stats.numerator[j] / stats.denominator : 0.0;
    out.gaussians[j].score = peak > 0.0 ? std::clamp(raw / peak, 0.0, 1.0) : 0.0;
  }
  return out;
}

Partition extract(const splat::GaussianModel& model, double threshold) {
  if (!model.has_scores()) throw StateError("extraction needs a score on every Gaussian");
  Partition p;
  for (std::size_t j = 0; j < model.size(); ++j) {
    (*model.gaussians[j].score > threshold ? p.object_indices : p.remainder_indices).push_back(j);
  }
  p.object = splat::select(model, p.object_indices);
  p.remainder = splat::select(model, p.remainder_indices);
  return p;
}

}  // namespace srl::segment
