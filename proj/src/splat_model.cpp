#include "srl/splat_model.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "srl/error.hpp"
#include "srl/parallel.hpp"

namespace srl::splat {

namespace {

std::vector<Vec3> icosa_dodeca_directions() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double inv = 1.0 / phi;
  std::vector<Vec3> dirs;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-phi, phi}) {
      dirs.emplace_back(0.0, a, b);
      dirs.emplace_back(a, b, 0.0);
      dirs.emplace_back(b, 0.0, a);
    }
  }
  for (double a : {-1.0, 1.0}) {
    for (double b : {-1.0, 1.0}) {
      for (double c : {-1.0, 1.0}) dirs.emplace_back(a, b, c);
    }
  }
  for (double a : {-inv, inv}) {
    for (double b : {-phi, phi}) {
      dirs.emplace_back(0.0, a, b);
      dirs.emplace_back(a, b, 0.0);
      dirs.emplace_back(b, 0.0, a);
    }
  }
  for (Vec3& d : dirs) d.normalize();
  return dirs;
}

std::vector<Vec3> fibonacci_directions(int n) {
  std::vector<Vec3> dirs;
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double frac = i * golden;
    frac -= std::floor(frac);
    dirs.emplace_back(r * std::cos(2.0 * kPi * frac), r * std::sin(2.0 * kPi * frac), z);
  }
  return dirs;
}

const std::vector<Vec3>& refit_directions(int l_max) {
  static const std::vector<Vec3> design = icosa_dodeca_directions();
  if (l_max <= 3) return design;
  thread_local std::vector<Vec3> fib;
  fib = fibonacci_directions(3 * sh::coeff_count(l_max));
  return fib;
}

}  // namespace

const char* to_string(ModelKind kind) {
  return kind == ModelKind::kSurfel ? "surfel" : "ellipsoid";
}

Mat3 Gaussian::covariance() const {
  const Mat3 r = rotation_matrix();
  return r * scale.array().square().matrix().asDiagonal() * r.transpose();
}

bool GaussianModel::has_scores() const {
  return !gaussians.empty() &&
         std::all_of(gaussians.begin(), gaussians.end(),
                     [](const Gaussian& g) { return g.score.has_value(); });
}

Vec3 GaussianModel::centroid() const {
  Vec3 c = Vec3::Zero();
  if (gaussians.empty()) return c;
  for (const auto& g : gaussians) c += g.position;
  return c / static_cast<double>(gaussians.size());
}

double GaussianModel::bounding_radius() const {
  const Vec3 c = centroid();
  double r = 0.0;
  for (const auto& g : gaussians) r = std::max(r, (g.position - c).norm());
  return r;
}

GaussianModel GaussianModel::empty_like() const {
  GaussianModel out;
  out.l_max = l_max;
  out.kind = kind;
  out.extra_names = extra_names;
  out.ply_layout = ply_layout;
  return out;
}

void validate(const GaussianModel& model) {
  for (std::size_t i = 0; i < model.size(); ++i) {
    const Gaussian& g = model.gaussians[i];
    if (!g.position.allFinite()) throw ArgumentError(fmt::format("Gaussian {}: bad position", i));
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) {
      throw ArgumentError(fmt::format("Gaussian {}: quaternion not unit length", i));
    }
    if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite()) {
      throw ArgumentError(fmt::format("Gaussian {}: scales must be positive", i));
    }
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
      throw ArgumentError(fmt::format("Gaussian {}: opacity outside [0, 1]", i));
    }
    if (g.sh.l_max() != model.l_max) {
      throw ArgumentError(fmt::format("Gaussian {}: SH degree {} differs from model degree {}",
                                      i, g.sh.l_max(), model.l_max));
    }
    if (!g.sh.all_finite()) throw ArgumentError(fmt::format("Gaussian {}: non-finite SH", i));
    if (g.extra.size() != model.extra_names.size()) {
      throw ArgumentError(fmt::format("Gaussian {}: extra property count mismatch", i));
    }
  }
}

double flat_fraction(const GaussianModel& model) {
  if (model.empty()) return 0.0;
  std::size_t flat = 0;
  for (const auto& g : model.gaussians) {
    std::array<double, 3> s = {g.scale.x(), g.scale.y(), g.scale.z()};
    std::sort(s.begin(), s.end());
    if (s[0] < 0.1 * 0.5 * (s[1] + s[2])) ++flat;
  }
  return static_cast<double>(flat) / static_cast<double>(model.size());
}

ModelKind detect_kind(const GaussianModel& model) {
  return flat_fraction(model) >= 0.9 ? ModelKind::kSurfel : ModelKind::kEllipsoid;
}

NormalEstimate normal_of(const Gaussian& g, ModelKind kind, const std::optional<Vec3>& outward_hint) {
  const Mat3 r = g.rotation_matrix();
  NormalEstimate out;
  if (kind == ModelKind::kSurfel) {
    out.normal = r.col(2);
  } else {
    int axes[3] = {0, 1, 2};
    std::sort(axes, axes + 3, [&](int a, int b) { return g.scale[a] < g.scale[b]; });
    out.normal = r.col(axes[0]);
    out.low_confidence = g.scale[axes[1]] < 1.2 * g.scale[axes[0]];
  }
  out.normal.normalize();
  if (outward_hint && out.normal.dot(g.position - *outward_hint) < 0.0) out.normal = -out.normal;
  return out;
}

Eigen::MatrixXd sh_rotation_matrix(int l_max, const Mat3& rotation) {
  const std::vector<Vec3>& dirs = refit_directions(l_max);
  const int k = sh::coeff_count(l_max);
  const auto n = static_cast<Eigen::Index>(dirs.size());
  Eigen::MatrixXd original(n, k);
  Eigen::MatrixXd rotated(n, k);
  Eigen::VectorXd row(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& d = dirs[static_cast<std::size_t>(i)];
    sh::eval_basis_into(l_max, d, {row.data(), static_cast<std::size_t>(k)});
    original.row(i) = row.transpose();
    sh::eval_basis_into(l_max, (rotation * d).normalized(), {row.data(), static_cast<std::size_t>(k)});
    rotated.row(i) = row.transpose();
  }
  // f'(R d_i) = f(d_i): fit coefficients at the rotated directions.
  Eigen::MatrixXd m = rotated.colPivHouseholderQr().solve(original);
  // Rotations never mix bands; drop the fit's round-off outside the blocks.
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      if (sh::degree_of(r) != sh::degree_of(c)) m(r, c) = 0.0;
    }
  }
  m(0, 0) = 1.0;
  return m;
}

GaussianModel transform_model(const GaussianModel& model, const Placement& placement) {
  if (!(placement.scale > 0.0) || !std::isfinite(placement.scale)) {
    throw ArgumentError("placement scale must be positive");
  }
  if (!placement.rotation.allFinite() ||
      !(placement.rotation * placement.rotation.transpose()).isApprox(Mat3::Identity(), 1e-6) ||
      std::abs(placement.rotation.determinant() - 1.0) > 1e-6) {
    throw ArgumentError("placement rotation is not a proper rotation");
  }
  GaussianModel out = model;
  const Eigen::MatrixXd m = sh_rotation_matrix(model.l_max, placement.rotation);
  const Quat rq(placement.rotation);
  parallel_for(out.size(), [&](std::size_t i) {
    Gaussian& g = out.gaussians[i];
    g.position = placement.scale * (placement.rotation * g.position) + placement.translation;
    g.rotation = (rq * g.rotation).normalized();
    g.scale *= placement.scale;
    g.sh.data() = m * g.sh.data();
    g.stored.reset();
  });
  return out;
}

GaussianModel with_degree(const GaussianModel& model, int l_max) {
  GaussianModel out = model;
  out.l_max = l_max;
  for (auto& g : out.gaussians) g.sh = g.sh.resized(l_max);
  return out;
}

MergeResult merge_models(const GaussianModel& object, const GaussianModel& scene) {
  const int l_max = std::max(object.l_max, scene.l_max);
  const GaussianModel obj = object.l_max == l_max ? object : with_degree(object, l_max);
  MergeResult result;
  result.model = scene.l_max == l_max ? scene : with_degree(scene, l_max);
  // Layout follows the scene; object extras are dropped unless the names match.
  const bool same_extras = obj.extra_names == result.model.extra_names;
  result.object_indices.reserve(obj.size());
  for (const auto& g : obj.gaussians) {
    result.object_indices.push_back(result.model.gaussians.size());
    Gaussian copy = g;
    if (!same_extras) copy.extra.assign(result.model.extra_names.size(), 0.0f);
    result.model.gaussians.push_back(std::move(copy));
  }
  return result;
}

GaussianModel select(const GaussianModel& model, const std::vector<std::size_t>& indices) {
  GaussianModel out = model.empty_like();
  out.gaussians.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= model.size()) throw ArgumentError("Gaussian index out of range");
    out.gaussians.push_back(model.gaussians[i]);
  }
  return out;
}

GaussianModel extract_by_score(const GaussianModel& model, double threshold, bool allow_empty) {
  if (!model.has_scores()) throw StateError("model carries no segmentation scores");
  GaussianModel out = model.empty_like();
  for (const auto& g : model.gaussians) {
    if (*g.score > threshold) out.gaussians.push_back(g);
  }
  if (out.empty() && !allow_empty) {
    throw StateError(fmt::format("no Gaussian scores above threshold {}", threshold));
  }
  return out;
}

}  // namespace srl::splat
