#pragma once

// Post-hoc object scores from 2D masks. Raw score of Gaussian j:
//   w_j = sum_k sum_p M_k(p) alpha_j T_j(p) / sum_k sum_p M_k(p)
// where alpha_j T_j(p) is its blend weight at pixel p of view k. Scores are
// divided by the largest raw score so the threshold is scale free.

#include <vector>

#include "srl/image.hpp"
#include "srl/raster.hpp"
#include "srl/splat_model.hpp"

namespace srl::segment {

inline constexpr double kDefaultThreshold = 0.5;

struct MaskSet {
  std::vector<raster::Camera> cameras;
  std::vector<BinaryMask> masks;

  // Throws ArgumentError for an empty set, unequal lengths or a mask whose
  // size differs from its camera.
  void validate() const;
};

// Copy of the model with every score set to the normalized value in [0, 1].
splat::GaussianModel score(const splat::GaussianModel& model, const MaskSet& masks);

struct Partition {
  splat::GaussianModel object;     // score > threshold
  splat::GaussianModel remainder;  // everything else
  std::vector<std::size_t> object_indices;
  std::vector<std::size_t> remainder_indices;
};

// Throws StateError when any Gaussian lacks a score.
Partition extract(const splat::GaussianModel& model, double threshold = kDefaultThreshold);

}  // namespace srl::segment
