#pragma once

// Real spherical harmonics with orthonormal normalization and the
// Condon-Shortley phase, stored in l*l + l + m order. This is the layout used
// by 3DGS appearance coefficients (Y_1,-1 = -c*y, Y_1,0 = c*z, Y_1,1 = -c*x).

#include <span>
#include <vector>

#include "srl/types.hpp"

namespace srl::sh {

inline constexpr int kDefaultDegree = 3;
// Largest degree accepted anywhere in the library.
inline constexpr int kMaxDegree = 15;
// Condition number of sqrt(W) * B above which projection refuses to solve.
inline constexpr double kMaxConditionNumber = 1e6;

constexpr int coeff_count(int l_max) { return (l_max + 1) * (l_max + 1); }

// Flat index l^2 + l + m. Throws ArgumentError for l < 0 or |m| > l.
int sh_index(int l, int m);
// As above, also rejecting l > l_max.
int sh_index(int l, int m, int l_max);
// Degree l of a flat index.
int degree_of(int index);

using CoeffMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Per-channel (RGB) coefficient vectors up to degree l_max. Row k holds
// coefficient k for the three channels.
class ShCoeffs {
 public:
  ShCoeffs() : ShCoeffs(0) {}
  explicit ShCoeffs(int l_max);
  ShCoeffs(int l_max, CoeffMatrix data);

  static ShCoeffs from_dc(const Rgb& dc, int l_max = 0);

  int l_max() const { return l_max_; }
  int size() const { return static_cast<int>(data_.rows()); }

  const CoeffMatrix& data() const { return data_; }
  CoeffMatrix& data() { return data_; }

  double operator()(int k, int c) const { return data_(k, c); }
  double& operator()(int k, int c) { return data_(k, c); }

  bool all_finite() const { return data_.allFinite(); }

  // Copy at another degree: zero padded when growing, truncated when shrinking.
  ShCoeffs resized(int l_max) const;

  // Euclidean norm of band l, per channel. Invariant under rotation.
  Rgb band_norm(int l) const;

  friend bool operator==(const ShCoeffs& a, const ShCoeffs& b) {
    return a.l_max_ == b.l_max_ && a.data_ == b.data_;
  }

 private:
  int l_max_;
  CoeffMatrix data_;
};

// Y_lm(dir) for all l <= l_max in sh_index order. Throws ArgumentError unless
// |dir| is 1 within 1e-6.
Eigen::VectorXd eval_basis(int l_max, const Vec3& dir);

// Unchecked variant writing coeff_count(l_max) values into out.
void eval_basis_into(int l_max, const Vec3& dir, std::span<double> out);

// Sphere directions with quadrature weights and the basis matrix evaluated at
// every direction (rows = samples, columns = coefficients).
class SampleSet {
 public:
  SampleSet(std::vector<Vec3> dirs, std::vector<double> weights, int l_max);

  int l_max() const { return l_max_; }
  std::size_t size() const { return dirs_.size(); }
  const std::vector<Vec3>& dirs() const { return dirs_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::MatrixXd& basis() const { return basis_; }
  double total_weight() const { return weights_.sum(); }

 private:
  int l_max_;
  std::vector<Vec3> dirs_;
  Eigen::VectorXd weights_;
  Eigen::MatrixXd basis_;
};

enum class ProjectionMethod {
  kLeastSquares,  // weighted normal equations
  kMonteCarlo,    // raw weighted sums, for cross-validation only
};

// Linear operator mapping sample values to coefficients: coeffs = P * values,
// with P of shape coeff_count(l_max) x N. Built once and reused for many
// value vectors over the same SampleSet.
class Projector {
 public:
  Projector(const SampleSet& samples, int l_max,
            ProjectionMethod method = ProjectionMethod::kLeastSquares);

  int l_max() const { return l_max_; }
  const Eigen::MatrixXd& matrix() const { return operator_; }
  // Condition number of sqrt(W) * B for the least-squares system.
  double condition_number() const { return condition_; }

  // values: N x 3 radiance at the sample directions.
  ShCoeffs apply(const Eigen::Ref<const Eigen::MatrixX3d>& values) const;

 private:
  int l_max_;
  double condition_ = 1.0;
  Eigen::MatrixXd operator_;
};

// Weighted least-squares fit minimising sum_i w_i |sum_k c_k Y_k(d_i) - v_i|^2.
// l_max < 0 selects the sample set's degree.
ShCoeffs project(const SampleSet& samples,
                 const Eigen::Ref<const Eigen::MatrixX3d>& values, int l_max = -1,
                 ProjectionMethod method = ProjectionMethod::kLeastSquares);

// sum_k c_k Y_k(dir) per channel.
Rgb reconstruct(const ShCoeffs& coeffs, const Vec3& dir);

// h_l = integral of max(cos theta, 0) * Y_l0 over the sphere, l = 0..l_max.
std::vector<double> clamped_cosine_zonal(int l_max);

}  // namespace srl::sh
