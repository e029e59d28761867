#include "srl/transfer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include "json.hpp"

#include "srl/error.hpp"
#include "srl/parallel.hpp"

namespace srl::transfer {

namespace {

constexpr std::size_t kBlock = 128;

struct RatioAccumulator {
  std::array<ChannelStats, 3> channels{};
  RatioAccumulator() {
    for (auto& c : channels) {
      c.min_tau = std::numeric_limits<double>::infinity();
      c.max_tau = -std::numeric_limits<double>::infinity();
    }
  }
  void add(const sh::CoeffMatrix& tau, const std::array<ClampCounts, 3>& counts) {
    for (int c = 0; c < 3; ++c) {
      auto& s = channels[static_cast<std::size_t>(c)];
      s.ratios += static_cast<std::size_t>(tau.rows());
      s.clamped_below += counts[static_cast<std::size_t>(c)].below;
      s.clamped_above += counts[static_cast<std::size_t>(c)].above;
      s.min_tau = std::min(s.min_tau, tau.col(c).minCoeff());
      s.max_tau = std::max(s.max_tau, tau.col(c).maxCoeff());
    }
  }
  void merge(const RatioAccumulator& o) {
    for (std::size_t c = 0; c < 3; ++c) {
      channels[c].ratios += o.channels[c].ratios;
      channels[c].clamped_below += o.channels[c].clamped_below;
      channels[c].clamped_above += o.channels[c].clamped_above;
      channels[c].min_tau = std::min(channels[c].min_tau, o.channels[c].min_tau);
      channels[c].max_tau = std::max(channels[c].max_tau, o.channels[c].max_tau);
    }
  }
};

double ratio(double target, double source, const TransferParams& p, ClampCounts& counts) {
  const double denom = source >= 0.0 ? source + p.epsilon : source - p.epsilon;
  const double raw = target / denom;
  if (raw < p.tau_min) {
    ++counts.below;
    return p.tau_min;
  }
  if (raw > p.tau_max) {
    ++counts.above;
    return p.tau_max;
  }
  return raw;
}

sh::CoeffMatrix ratio_matrix(const sh::CoeffMatrix& target, const sh::CoeffMatrix& source,
                             const TransferParams& p, std::array<ClampCounts, 3>& counts) {
  sh::CoeffMatrix tau(target.rows(), 3);
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index k = 0; k < target.rows(); ++k) {
      tau(k, c) = ratio(target(k, c), source(k, c), p, counts[static_cast<std::size_t>(c)]);
    }
  }
  return tau;
}

void apply_ratio(splat::Gaussian& g, const sh::CoeffMatrix& tau) {
  const Eigen::Index k_tau = tau.rows();
  auto& data = g.sh.data();
  const Eigen::Index shared = std::min<Eigen::Index>(k_tau, data.rows());
  data.topRows(shared).array() *= tau.topRows(shared).array();
  for (Eigen::Index k = shared; k < data.rows(); ++k) data.row(k).array() *= tau.row(0).array();
}

}  // namespace

void TransferParams::validate() const {
  if (!(epsilon > 0.0)) throw ArgumentError("transfer epsilon must be positive");
  if (!(tau_min <= tau_max)) throw ArgumentError("tau_min must not exceed tau_max");
  if (l_max < 0 || l_max > sh::kMaxDegree) throw ArgumentError("transfer degree out of range");
  if (n_samples < sh::coeff_count(l_max)) {
    throw ArgumentError(fmt::format("n_samples {} is below the {} coefficients of degree {}",
                                    n_samples, sh::coeff_count(l_max), l_max));
  }
}

Eigen::VectorXd shading_weights(const Vec3& normal, const sh::SampleSet& samples) {
  if (std::abs(normal.norm() - 1.0) > 1e-6) throw ArgumentError("shading normal must be unit length");
  Eigen::VectorXd w(static_cast<Eigen::Index>(samples.size()));
  const auto& dirs = samples.dirs();
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    w[static_cast<Eigen::Index>(i)] = std::max(normal.dot(dirs[i]), 0.0);
  }
  return w;
}

sh::ShCoeffs modulated_env_sh(const Eigen::MatrixX3d& env_samples, const Eigen::VectorXd& shading,
                              const sh::SampleSet& samples, int l_max) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (env_samples.rows() != n || shading.size() != n) {
    throw ArgumentError("environment samples, shading and sample set differ in length");
  }
  const Eigen::MatrixX3d modulated = env_samples.array().colwise() * shading.array();
  return sh::project(samples, modulated, l_max);
}

sh::CoeffMatrix transfer_ratio(const sh::ShCoeffs& target, const sh::ShCoeffs& source,
                               const TransferParams& params, ClampCounts* counts) {
  if (target.l_max() != source.l_max()) {
    throw ArgumentError("source and target coefficients differ in degree");
  }
  std::array<ClampCounts, 3> local{};
  sh::CoeffMatrix tau = ratio_matrix(target.data(), source.data(), params, local);
  if (counts != nullptr) {
    for (int c = 0; c < 3; ++c) {
      counts[c].below += local[static_cast<std::size_t>(c)].below;
      counts[c].above += local[static_cast<std::size_t>(c)].above;
    }
  }
  return tau;
}

std::string stats_to_jsonl(const TransferStats& stats) {
  static const char* kNames[3] = {"r", "g", "b"};
  std::string out;
  std::size_t total = 0, clamped = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& s = stats.channels[c];
    nlohmann::json line = {{"channel", kNames[c]},
                           {"ratios", s.ratios},
                           {"clamped_below", s.clamped_below},
                           {"clamped_above", s.clamped_above},
                           {"clamp_rate", s.clamp_rate()},
                           {"min_tau", s.min_tau},
                           {"max_tau", s.max_tau}};
    out += line.dump() + "\n";
    total += s.ratios;
    clamped += s.clamped_below + s.clamped_above;
  }
  nlohmann::json summary = {
      {"summary", true},
      {"gaussians", stats.gaussians},
      {"low_confidence_normals", stats.low_confidence_normals},
      {"clamp_rate", total == 0 ? 0.0 : static_cast<double>(clamped) / static_cast<double>(total)},
      {"seconds", stats.seconds}};
  out += summary.dump() + "\n";
  return out;
}

Relighter::Relighter(const env::EquirectMap& source, const env::EquirectMap& target,
                     const TransferParams& params)
    : params_(params),
      samples_((params.validate(),
                env::sample_sphere(params.n_samples, params.strategy, params.seed, params.l_max))) {
  source.validate(true);
  target.validate(true);
  const sh::Projector projector(samples_, params_.l_max);
  const Eigen::MatrixXd& p = projector.matrix();  // K x N
  const Eigen::MatrixX3d ls = env::lookup(source, samples_);
  const Eigen::MatrixX3d lt = env::lookup(target, samples_);
  const Eigen::Index k = p.rows();
  const Eigen::Index n = p.cols();
  modulated_operator_.resize(6 * k, n);
  for (int c = 0; c < 3; ++c) {
    modulated_operator_.middleRows(c * k, k) =
        p.array().rowwise() * ls.col(c).transpose().array();
    modulated_operator_.middleRows((3 + c) * k, k) =
        p.array().rowwise() * lt.col(c).transpose().array();
  }
  dirs_.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) dirs_.row(i) = samples_.dirs()[static_cast<std::size_t>(i)].transpose();

  std::array<ClampCounts, 3> ignored{};
  global_tau_ = ratio_matrix(p * lt, p * ls, params_, ignored);
}

RelightResult Relighter::apply(const splat::GaussianModel& object) const {
  const auto start = std::chrono::steady_clock::now();
  RelightResult result;
  result.model = object;
  const std::size_t count = object.size();
  const Eigen::Index k = sh::coeff_count(params_.l_max);
  const std::optional<Vec3> hint =
      count > 1 ? std::optional<Vec3>(object.centroid()) : std::nullopt;

  std::vector<splat::NormalEstimate> normals(count);
  parallel_for(count, [&](std::size_t i) {
    normals[i] = splat::normal_of(object.gaussians[i], object.kind, hint);
  }, 1024);

  const std::size_t blocks = (count + kBlock - 1) / kBlock;
  std::vector<RatioAccumulator> block_stats(blocks);
  std::vector<std::size_t> block_low(blocks, 0);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t begin = b * kBlock;
    const std::size_t end = std::min(count, begin + kBlock);
    const auto width = static_cast<Eigen::Index>(end - begin);
    RatioAccumulator& acc = block_stats[b];
    std::array<ClampCounts, 3> counts{};

    Eigen::MatrixXd normal_block(3, width);
    for (std::size_t i = begin; i < end; ++i) {
      normal_block.col(static_cast<Eigen::Index>(i - begin)) = normals[i].normal;
    }
    Eigen::MatrixXd coeffs;
    if (params_.per_gaussian_shading) {
      const Eigen::MatrixXd shading = (dirs_ * normal_block).cwiseMax(0.0);  // N x B
      coeffs.noalias() = modulated_operator_ * shading;                    // 6K x B
    }
    for (std::size_t i = begin; i < end; ++i) {
      splat::Gaussian& g = result.model.gaussians[i];
      counts = {};
      if (!params_.per_gaussian_shading || normals[i].low_confidence) {
        if (normals[i].low_confidence) ++block_low[b];
        apply_ratio(g, global_tau_);
        continue;
      }
      const auto col = static_cast<Eigen::Index>(i - begin);
      sh::CoeffMatrix source(k, 3), target(k, 3);
      for (int c = 0; c < 3; ++c) {
        source.col(c) = coeffs.block(c * k, col, k, 1);
        target.col(c) = coeffs.block((3 + c) * k, col, k, 1);
      }
      const sh::CoeffMatrix tau = ratio_matrix(target, source, params_, counts);
      acc.add(tau, counts);
      apply_ratio(g, tau);
    }
  }, 1);

  RatioAccumulator total;
  for (const auto& s : block_stats) total.merge(s);
  result.stats.channels = total.channels;
  for (auto& c : result.stats.channels) {
    if (c.ratios == 0) c.min_tau = c.max_tau = 0.0;
  }
  result.stats.gaussians = count;
  for (std::size_t v : block_low) result.stats.low_confidence_normals += v;
  result.stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RelightResult relight(const splat::GaussianModel& object, const env::EquirectMap& source,
                      const env::EquirectMap& target, const TransferParams& params) {
  const auto start = std::chrono::steady_clock::now();
  const Relighter relighter(source, target, params);
  RelightResult result = relighter.apply(object);
  result.stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace srl::transfer
