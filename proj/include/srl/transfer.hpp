#pragma once

// Per-Gaussian lighting transfer. For a Gaussian with normal n, both
// environments are modulated by the shading map H(u) = max(n.u, 0), projected
// to SH, and the Gaussian's appearance coefficients are scaled by
// tau_lm,c = clamp(L_T,lm,c / (L_S,lm,c +- eps), tau_min, tau_max), where eps
// carries the sign of the denominator.

#include <cstdint>
#include <string>

#include "srl/envmap.hpp"
#include "srl/sh.hpp"
#include "srl/splat_model.hpp"

namespace srl::transfer {

struct TransferParams {
  double epsilon = 1e-4;
  double tau_min = 0.0;
  double tau_max = 10.0;
  int l_max = sh::kDefaultDegree;
  int n_samples = 5000;
  bool per_gaussian_shading = true;
  env::SamplingStrategy strategy = env::SamplingStrategy::kEqualArea;
  std::uint64_t seed = 0;

  // Throws ArgumentError when epsilon <= 0, tau_min > tau_max or
  // n_samples < (l_max+1)^2.
  void validate() const;
};

// w_i = max(normal . dir_i, 0).
Eigen::VectorXd shading_weights(const Vec3& normal, const sh::SampleSet& samples);

// SH coefficients of the pointwise product env * shading.
sh::ShCoeffs modulated_env_sh(const Eigen::MatrixX3d& env_samples, const Eigen::VectorXd& shading,
                              const sh::SampleSet& samples, int l_max);

struct ClampCounts {
  std::size_t below = 0;  // raw ratio < tau_min
  std::size_t above = 0;  // raw ratio > tau_max
};

// Per-coefficient, per-channel ratio. Always finite. Optional clamp counts
// per channel are accumulated into `counts`.
sh::CoeffMatrix transfer_ratio(const sh::ShCoeffs& target, const sh::ShCoeffs& source,
                               const TransferParams& params, ClampCounts* counts = nullptr);

struct ChannelStats {
  std::size_t ratios = 0;
  std::size_t clamped_below = 0;
  std::size_t clamped_above = 0;
  double min_tau = 0.0;  // after clamping
  double max_tau = 0.0;
  double clamp_rate() const {
    return ratios == 0 ? 0.0 : static_cast<double>(clamped_below + clamped_above) / ratios;
  }
};

struct TransferStats {
  std::size_t gaussians = 0;
  std::size_t low_confidence_normals = 0;  // relit with the global ratio
  std::array<ChannelStats, 3> channels;
  double seconds = 0.0;
};

// One JSON object per line: one per channel, then a summary line.
std::string stats_to_jsonl(const TransferStats& stats);

struct RelightResult {
  splat::GaussianModel model;
  TransferStats stats;
};

// Precomputes everything that depends only on the environment pair, so many
// models can be relit against the same lighting.
class Relighter {
 public:
  Relighter(const env::EquirectMap& source, const env::EquirectMap& target,
            const TransferParams& params);

  // Geometry, opacity, scores and extras are copied unchanged. Coefficients of
  // bands above params.l_max are scaled by the DC ratio.
  RelightResult apply(const splat::GaussianModel& object) const;

  // Ratio used when shading is disabled or the normal is unreliable.
  const sh::CoeffMatrix& global_ratio() const { return global_tau_; }
  const sh::SampleSet& samples() const { return samples_; }

 private:
  TransferParams params_;
  sh::SampleSet samples_;
  // Rows [c*K, (c+1)*K): projector rows scaled by source channel c at each
  // sample; rows [3K + c*K, ...): the same for the target.
  Eigen::MatrixXd modulated_operator_;
  Eigen::MatrixX3d dirs_;
  sh::CoeffMatrix global_tau_;
};

RelightResult relight(const splat::GaussianModel& object, const env::EquirectMap& source,
                      const env::EquirectMap& target, const TransferParams& params = {});

}  // namespace srl::transfer
