#include "srl/sh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <fmt/format.h>

#include "srl/error.hpp"

namespace srl::sh {

namespace {

// K_lm = sqrt((2l+1)/(4pi) * (l-m)!/(l+m)!), m >= 0.
struct NormalizationTable {
  std::array<double, coeff_count(kMaxDegree)> k{};
  NormalizationTable() {
    for (int l = 0; l <= kMaxDegree; ++l) {
      for (int m = 0; m <= l; ++m) {
        double ratio = 1.0;
        for (int f = l - m + 1; f <= l + m; ++f) ratio /= f;
        k[l * l + l + m] = std::sqrt((2.0 * l + 1.0) / (4.0 * kPi) * ratio);
      }
    }
  }
};

const NormalizationTable& normalization() {
  static const NormalizationTable table;
  return table;
}

void check_degree(int l_max) {
  if (l_max < 0 || l_max > kMaxDegree) {
    throw ArgumentError(fmt::format("SH degree {} outside [0, {}]", l_max, kMaxDegree));
  }
}

// Condition number of sqrt(W) B restricted to degrees <= l.
double leading_condition(const Eigen::MatrixXd& gram, int l) {
  const int n = coeff_count(l);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram.topLeftCorner(n, n),
                                                     Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !(hi > 0.0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(hi / lo);
}

}  // namespace

int sh_index(int l, int m) {
  if (l < 0 || m < -l || m > l) {
    throw ArgumentError(fmt::format("invalid SH index (l={}, m={})", l, m));
  }
  return l * l + l + m;
}

int sh_index(int l, int m, int l_max) {
  if (l > l_max) {
    throw ArgumentError(fmt::format("SH degree {} exceeds l_max {}", l, l_max));
  }
  return sh_index(l, m);
}

int degree_of(int index) {
  if (index < 0) throw ArgumentError("negative SH index");
  return static_cast<int>(std::sqrt(static_cast<double>(index)) + 1e-9);
}

ShCoeffs::ShCoeffs(int l_max) : l_max_(l_max) {
  check_degree(l_max);
  data_ = CoeffMatrix::Zero(coeff_count(l_max), 3);
}

ShCoeffs::ShCoeffs(int l_max, CoeffMatrix data) : l_max_(l_max), data_(std::move(data)) {
  check_degree(l_max);
  if (data_.rows() != coeff_count(l_max)) {
    throw ArgumentError(fmt::format("expected {} SH coefficients for l_max={}, got {}",
                                    coeff_count(l_max), l_max, data_.rows()));
  }
}

ShCoeffs ShCoeffs::from_dc(const Rgb& dc, int l_max) {
  ShCoeffs out(l_max);
  out.data_.row(0) = dc.matrix().transpose();
  return out;
}

ShCoeffs ShCoeffs::resized(int l_max) const {
  ShCoeffs out(l_max);
  const int n = std::min(size(), out.size());
  out.data_.topRows(n) = data_.topRows(n);
  return out;
}

Rgb ShCoeffs::band_norm(int l) const {
  if (l < 0 || l > l_max_) throw ArgumentError("band outside coefficient range");
  return data_.middleRows(l * l, 2 * l + 1).colwise().norm().transpose().array();
}

void eval_basis_into(int l_max, const Vec3& dir, std::span<double> out) {
  const auto& k = normalization().k;
  const double x = dir.x(), y = dir.y(), z = dir.z();
  // (x + iy)^m = sin^m(theta) e^{i m phi}; q holds P_l^m / sin^m(theta).
  double cm = 1.0, sm = 0.0;
  double q_mm = 1.0;
  for (int m = 0; m <= l_max; ++m) {
    if (m > 0) {
      const double c = cm * x - sm * y;
      sm = cm * y + sm * x;
      cm = c;
      q_mm *= -(2.0 * m - 1.0);
    }
    double q_prev2 = 0.0, q_prev = 0.0;
    for (int l = m; l <= l_max; ++l) {
      double q;
      if (l == m) {
        q = q_mm;
      } else if (l == m + 1) {
        q = z * (2.0 * m + 1.0) * q_mm;
      } else {
        q = ((2.0 * l - 1.0) * z * q_prev - (l + m - 1.0) * q_prev2) / (l - m);
      }
      q_prev2 = q_prev;
      q_prev = q;
      const int center = l * l + l;
      if (m == 0) {
        out[center] = k[center] * q;
      } else {
        const double scaled = std::sqrt(2.0) * k[center + m] * q;
        out[center + m] = scaled * cm;
        out[center - m] = scaled * sm;
      }
    }
  }
}

Eigen::VectorXd eval_basis(int l_max, const Vec3& dir) {
  check_degree(l_max);
  if (!dir.allFinite() || std::abs(dir.norm() - 1.0) > 1e-6) {
    throw ArgumentError("eval_basis requires a unit direction");
  }
  Eigen::VectorXd out(coeff_count(l_max));
  eval_basis_into(l_max, dir, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

SampleSet::SampleSet(std::vector<Vec3> dirs, std::vector<double> weights, int l_max)
    : l_max_(l_max), dirs_(std::move(dirs)) {
  check_degree(l_max);
  if (weights.size() != dirs_.size()) {
    throw ArgumentError("sample directions and weights differ in length");
  }
  const auto n = static_cast<Eigen::Index>(dirs_.size());
  const int k = coeff_count(l_max);
  weights_ = Eigen::Map<const Eigen::VectorXd>(weights.data(), n);
  // Row-major scratch so each sample writes one contiguous row.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& d = dirs_[static_cast<std::size_t>(i)];
    if (!d.allFinite() || std::abs(d.norm() - 1.0) > 1e-9) {
      throw ArgumentError(fmt::format("sample direction {} is not unit length", i));
    }
    if (!(weights_[i] >= 0.0)) {
      throw ArgumentError(fmt::format("sample weight {} is negative", i));
    }
    eval_basis_into(l_max, d, {rows.row(i).data(), static_cast<std::size_t>(k)});
  }
  basis_ = rows;
}

Projector::Projector(const SampleSet& samples, int l_max, ProjectionMethod method)
    : l_max_(l_max < 0 ? samples.l_max() : l_max) {
  if (l_max_ > samples.l_max()) {
    throw ArgumentError(fmt::format("projection degree {} exceeds sample basis degree {}",
                                    l_max_, samples.l_max()));
  }
  const int k = coeff_count(l_max_);
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto basis = samples.basis().leftCols(k);
  const auto& w = samples.weights();

  if (method == ProjectionMethod::kMonteCarlo) {
    operator_ = basis.transpose() * w.asDiagonal();
    return;
  }

  if (n < k) {
    int deficient = 0;
    while (coeff_count(deficient) <= n) ++deficient;
    throw ProjectionError(
        fmt::format("{} samples cannot determine {} coefficients; system is rank "
                    "deficient from degree {}",
                    n, k, deficient),
        deficient);
  }

  const Eigen::MatrixXd weighted = basis.transpose() * w.asDiagonal();  // K x N
  const Eigen::MatrixXd gram = weighted * basis;                       // K x K
  condition_ = leading_condition(gram, l_max_);
  if (!(condition_ < kMaxConditionNumber)) {
    int deficient = 0;
    while (deficient < l_max_ && leading_condition(gram, deficient) < kMaxConditionNumber) {
      ++deficient;
    }
    throw ProjectionError(
        fmt::format("sample set is ill-conditioned (condition number {:.3g}); rank "
                    "deficient at degree {}",
                    condition_, deficient),
        deficient);
  }
  operator_ = gram.llt().solve(weighted);
}

ShCoeffs Projector::apply(const Eigen::Ref<const Eigen::MatrixX3d>& values) const {
  if (values.rows() != operator_.cols()) {
    throw ArgumentError(fmt::format("expected {} sample values, got {}", operator_.cols(),
                                    values.rows()));
  }
  return ShCoeffs(l_max_, operator_ * values);
}

ShCoeffs project(const SampleSet& samples, const Eigen::Ref<const Eigen::MatrixX3d>& values,
                 int l_max, ProjectionMethod method) {
  return Projector(samples, l_max, method).apply(values);
}

Rgb reconstruct(const ShCoeffs& coeffs, const Vec3& dir) {
  const Eigen::VectorXd basis = eval_basis(coeffs.l_max(), dir);
  return (coeffs.data().transpose() * basis).array();
}

std::vector<double> clamped_cosine_zonal(int l_max) {
  check_degree(l_max);
  std::vector<double> h(static_cast<std::size_t>(l_max) + 1, 0.0);
  for (int l = 0; l <= l_max; ++l) {
    double a;  // Lambertian convolution constant A_l = sqrt(4pi/(2l+1)) h_l
    if (l == 0) {
      a = kPi;
    } else if (l == 1) {
      a = 2.0 * kPi / 3.0;
    } else if (l % 2 == 1) {
      a = 0.0;
    } else {
      double central = 1.0;  // binom(l, l/2) / 2^l
      for (int i = 1; i <= l / 2; ++i) central *= (l / 2.0 + i) / (4.0 * i);
      const double sign = (l / 2) % 2 == 1 ? 1.0 : -1.0;
      a = 2.0 * kPi * sign / ((l + 2.0) * (l - 1.0)) * central;
    }
    h[static_cast<std::size_t>(l)] = a * std::sqrt((2.0 * l + 1.0) / (4.0 * kPi));
  }
  return h;
}

}  // namespace srl::sh
