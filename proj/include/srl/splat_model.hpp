#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "srl/sh.hpp"
#include "srl/types.hpp"

namespace srl::splat {

enum class ModelKind { kEllipsoid, kSurfel };

const char* to_string(ModelKind kind);

// Encoded PLY values kept from load so an unmodified Gaussian is written
// back with the exact bytes it was read from.
struct StoredPlyValues {
  std::array<float, 4> rotation{};  // rot_0..3, unnormalized as stored
  std::array<float, 3> log_scale{};
  float opacity_logit = 0.0f;
};

struct Gaussian {
  Vec3 position = Vec3::Zero();
  Quat rotation = Quat::Identity();  // unit, (w, x, y, z)
  Vec3 scale = Vec3::Constant(0.01);  // standard deviations, world units
  double opacity = 1.0;               // [0, 1]
  sh::ShCoeffs sh{sh::kDefaultDegree};  // appearance, evaluated at the view direction
  std::optional<double> score;        // segmentation score in [0, 1]
  std::vector<float> extra;           // values for GaussianModel::extra_names
  std::optional<StoredPlyValues> stored;

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  // World-space covariance R S^2 R^T.
  Mat3 covariance() const;
};

struct GaussianModel {
  int l_max = sh::kDefaultDegree;
  ModelKind kind = ModelKind::kEllipsoid;
  std::vector<Gaussian> gaussians;
  // Names of additional float properties carried through PLY round trips.
  std::vector<std::string> extra_names;
  // Property order of the PLY file the model came from; empty means the stock
  // 3DGS order.
  std::vector<std::string> ply_layout;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
  bool has_scores() const;
  Vec3 centroid() const;
  // Radius of the sphere around centroid() containing every mean.
  double bounding_radius() const;
  // Copy without Gaussians but with the same degree, kind and extras.
  GaussianModel empty_like() const;
};

// Throws ArgumentError if any Gaussian breaks the container invariants
// (unit quaternion within 1e-6, positive scales, opacity in [0, 1],
// coefficient count matching l_max, extras sized to extra_names).
void validate(const GaussianModel& model);

// Fraction of Gaussians whose smallest scale is below 0.1x the mean of the
// other two.
double flat_fraction(const GaussianModel& model);
// kSurfel when flat_fraction >= 0.9.
ModelKind detect_kind(const GaussianModel& model);

struct NormalEstimate {
  Vec3 normal = Vec3::UnitZ();
  // Ellipsoid whose two smallest scales differ by less than 1.2x.
  bool low_confidence = false;
};

// Surfels use the rotated local +z axis; ellipsoids use the axis of the
// smallest scale. With a hint, the normal is flipped to point away from it
// (the hint is normally the object centroid). A rotation of +90 degrees about
// x maps local +z to world -y.
NormalEstimate normal_of(const Gaussian& g, ModelKind kind,
                         const std::optional<Vec3>& outward_hint = std::nullopt);

struct Placement {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
};

// Matrix M with coeffs' = M * coeffs such that the rotated function satisfies
// f'(R d) = f(d). Built by evaluating the basis on a fixed well-conditioned
// direction set (icosahedron + dodecahedron vertices for l_max <= 3) and
// refitting at the rotated directions.
Eigen::MatrixXd sh_rotation_matrix(int l_max, const Mat3& rotation);

// position -> s R p + t, orientation -> R q, scale -> s * scale, appearance
// rotated with sh_rotation_matrix.
GaussianModel transform_model(const GaussianModel& model, const Placement& placement);

// Pads (zero) or truncates every Gaussian's coefficients to l_max.
GaussianModel with_degree(const GaussianModel& model, int l_max);

struct MergeResult {
  GaussianModel model;                   // scene Gaussians first, then object
  std::vector<std::size_t> object_indices;
};

// The lower-degree model is zero padded to the higher degree. Kind and extra
// properties follow the scene.
MergeResult merge_models(const GaussianModel& object, const GaussianModel& scene);

GaussianModel select(const GaussianModel& model, const std::vector<std::size_t>& indices);

// Gaussians with score > threshold. Throws StateError when any Gaussian has
// no score, and when the result is empty unless allow_empty is set.
GaussianModel extract_by_score(const GaussianModel& model, double threshold,
                               bool allow_empty = true);

}  // namespace srl::splat
