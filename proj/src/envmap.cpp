#include "srl/envmap.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <random>

#include "srl/error.hpp"
#include "srl/parallel.hpp"

namespace srl::env {

namespace {

constexpr double kTwoPi = 2.0 * kPi;

// Samples a bilinear face lookup with edge clamping.
Rgb bilinear(const Image& img, double x, double y, bool wrap_x) {
  const int w = img.width();
  const int h = img.height();
  const double fx = x - 0.5;
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double ax = fx - x0f;
  const double ay = fy - y0f;
  int x0 = static_cast<int>(x0f);
  int x1 = x0 + 1;
  const int y0 = static_cast<int>(y0f);
  const int y1 = std::min(y0 + 1, h - 1);
  if (wrap_x) {
    x0 = ((x0 % w) + w) % w;
    x1 = ((x1 % w) + w) % w;
  } else {
    x0 = std::clamp(x0, 0, w - 1);
    x1 = std::clamp(x1, 0, w - 1);
  }
  return (1.0 - ay) * ((1.0 - ax) * img.rgb(x0, y0) + ax * img.rgb(x1, y0)) +
         ay * ((1.0 - ax) * img.rgb(x0, y1) + ax * img.rgb(x1, y1));
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Quat q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

PixelCoord dir_to_uv(const Vec3& dir, int width, int height) {
  const Vec3 d = dir.normalized();
  const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
  double phi = std::atan2(d.y(), d.x());
  if (phi < 0.0) phi += kTwoPi;
  return {phi / kTwoPi * width, theta / kPi * height};
}

Vec3 uv_to_dir(double u, double v, int width, int height) {
  const double theta = kPi * v / height;
  const double phi = kTwoPi * u / width;
  const double st = std::sin(theta);
  return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
}

EquirectMap::EquirectMap(int height, const Rgb& fill) {
  if (height < 1) throw ArgumentError("equirect height must be positive");
  image_ = Image(2 * height, height, 3);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < 2 * height; ++u) image_.set_rgb(u, v, fill);
  }
}

EquirectMap::EquirectMap(Image image) : image_(std::move(image)) {
  if (image_.height() < 1 || image_.width() != 2 * image_.height()) {
    throw ArgumentError(fmt::format("equirect map must be 2:1, got {}x{}", image_.width(),
                                    image_.height()));
  }
  if (image_.channels() != 3) throw ArgumentError("equirect map must have 3 channels");
}

Vec3 EquirectMap::texel_dir(int u, int v) const {
  return uv_to_dir(u + 0.5, v + 0.5, width(), height());
}

Rgb EquirectMap::sample(const Vec3& dir) const {
  const PixelCoord p = dir_to_uv(dir, width(), height());
  return bilinear(image_, p.u, p.v, true);
}

void EquirectMap::validate(bool require_nonnegative) const {
  for (float value : image_.pixels()) {
    if (!std::isfinite(value)) throw ArgumentError("environment map has non-finite radiance");
    if (require_nonnegative && value < 0.0f) {
      throw ArgumentError("environment map has negative radiance");
    }
  }
}

Rgb EquirectMap::mean_radiance() const {
  Rgb sum = Rgb::Zero();
  double total = 0.0;
  for (int v = 0; v < height(); ++v) {
    const double w = std::sin(kPi * (v + 0.5) / height());
    for (int u = 0; u < width(); ++u) sum += w * texel(u, v);
    total += w * width();
  }
  return sum / total;
}

const FaceFrame& face_frame(int face) {
  static const std::array<FaceFrame, kCubeFaces> frames = [] {
    const std::array<std::pair<Vec3, Vec3>, kCubeFaces> fu = {{
        {Vec3::UnitX(), Vec3::UnitZ()},
        {-Vec3::UnitX(), Vec3::UnitZ()},
        {Vec3::UnitY(), Vec3::UnitZ()},
        {-Vec3::UnitY(), Vec3::UnitZ()},
        {Vec3::UnitZ(), -Vec3::UnitX()},
        {-Vec3::UnitZ(), Vec3::UnitX()},
    }};
    std::array<FaceFrame, kCubeFaces> out;
    for (std::size_t i = 0; i < fu.size(); ++i) {
      out[i] = {fu[i].first, fu[i].first.cross(fu[i].second), fu[i].second};
    }
    return out;
  }();
  if (face < 0 || face >= kCubeFaces) throw ArgumentError("cube face index out of range");
  return frames[static_cast<std::size_t>(face)];
}

CubeMap::CubeMap(int face_res, const Rgb& fill) : face_res_(face_res) {
  if (face_res < 1) throw ArgumentError("cube face resolution must be positive");
  for (auto& f : faces_) {
    f = Image(face_res, face_res, 3);
    for (int y = 0; y < face_res; ++y) {
      for (int x = 0; x < face_res; ++x) f.set_rgb(x, y, fill);
    }
  }
}

void CubeMap::enable_alpha() {
  for (auto& a : alpha_) a = Image(face_res_, face_res_, 1);
}

Vec3 CubeMap::texel_dir(int face, int x, int y) const {
  const FaceFrame& f = face_frame(face);
  const double s = 2.0 * (x + 0.5) / face_res_ - 1.0;
  const double t = 1.0 - 2.0 * (y + 0.5) / face_res_;
  return (f.forward + s * f.right + t * f.up).normalized();
}

void CubeMap::validate() const {
  for (const auto& f : faces_) {
    if (f.width() != face_res_ || f.height() != face_res_) {
      throw ArgumentError("cube faces must be square and of equal resolution");
    }
    for (float value : f.pixels()) {
      if (!std::isfinite(value) || value < 0.0f) {
        throw ArgumentError("cube map radiance must be finite and nonnegative");
      }
    }
  }
}

FaceCoord dir_to_face(const Vec3& dir, int face_res) {
  const Vec3 a = dir.cwiseAbs();
  int face;
  if (a.x() >= a.y() && a.x() >= a.z()) {
    face = dir.x() >= 0.0 ? 0 : 1;
  } else if (a.y() >= a.z()) {
    face = dir.y() >= 0.0 ? 2 : 3;
  } else {
    face = dir.z() >= 0.0 ? 4 : 5;
  }
  const FaceFrame& f = face_frame(face);
  const double depth = dir.dot(f.forward);
  const double s = dir.dot(f.right) / depth;
  const double t = dir.dot(f.up) / depth;
  return {face, (s + 1.0) * 0.5 * face_res, (1.0 - t) * 0.5 * face_res};
}

EquirectMap cubemap_to_equirect(const CubeMap& cube, int out_height) {
  EquirectMap out(out_height);
  const int w = out.width();
  parallel_for(static_cast<std::size_t>(out_height), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < w; ++u) {
      const FaceCoord fc = dir_to_face(out.texel_dir(u, v), cube.face_res());
      out.set_texel(u, v, bilinear(cube.face(fc.face), fc.x, fc.y, false));
    }
  }, 8);
  return out;
}

Image cubemap_alpha_to_equirect(const CubeMap& cube, int out_height) {
  if (!cube.has_alpha()) throw StateError("cube map carries no alpha channel");
  Image out(2 * out_height, out_height, 1);
  const int w = out.width();
  for (int v = 0; v < out_height; ++v) {
    for (int u = 0; u < w; ++u) {
      const Vec3 d = uv_to_dir(u + 0.5, v + 0.5, w, out_height);
      const FaceCoord fc = dir_to_face(d, cube.face_res());
      out.at(u, v, 0) = static_cast<float>(bilinear(cube.alpha(fc.face), fc.x, fc.y, false)[0]);
    }
  }
  return out;
}

CubeMap equirect_to_cubemap(const EquirectMap& map, int face_res) {
  CubeMap cube(face_res);
  for (int f = 0; f < kCubeFaces; ++f) {
    Image& img = cube.face(f);
    parallel_for(static_cast<std::size_t>(face_res), [&](std::size_t row) {
      const int y = static_cast<int>(row);
      for (int x = 0; x < face_res; ++x) img.set_rgb(x, y, map.sample(cube.texel_dir(f, x, y)));
    }, 8);
  }
  return cube;
}

std::size_t fill_missing(EquirectMap& map, const Image& alpha,
                         const std::optional<Rgb>& background, double threshold) {
  if (alpha.width() != map.width() || alpha.height() != map.height()) {
    throw ArgumentError("alpha and environment map dimensions differ");
  }
  Rgb fill = Rgb::Zero();
  if (background) {
    fill = *background;
  } else {
    double total = 0.0;
    for (int v = 0; v < map.height(); ++v) {
      const double w = std::sin(kPi * (v + 0.5) / map.height());
      for (int u = 0; u < map.width(); ++u) {
        if (alpha.at(u, v, 0) >= threshold) {
          fill += w * map.texel(u, v);
          total += w;
        }
      }
    }
    if (total > 0.0) fill /= total;
  }
  std::size_t replaced = 0;
  for (int v = 0; v < map.height(); ++v) {
    for (int u = 0; u < map.width(); ++u) {
      if (alpha.at(u, v, 0) < threshold) {
        map.set_texel(u, v, fill);
        ++replaced;
      }
    }
  }
  return replaced;
}

double ldr_to_hdr_value(double v, const LdrToHdrParams& p) {
  if (!(p.gamma > 0.0)) throw ArgumentError("ldr_to_hdr: gamma must be positive");
  if (!(p.boost >= 1.0)) throw ArgumentError("ldr_to_hdr: boost must be at least 1");
  if (!(p.knee > 0.0 && p.knee < 1.0)) throw ArgumentError("ldr_to_hdr: knee must be in (0, 1)");
  if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("ldr_to_hdr: input outside [0, 1]");
  const double base = std::pow(v, p.gamma);
  if (v <= p.knee) return base;
  const double t = (v - p.knee) / (1.0 - p.knee);
  const double ramp = t * t * (3.0 - 2.0 * t);
  return base * (1.0 + (p.boost - 1.0) * ramp);
}

EquirectMap ldr_to_hdr(const EquirectMap& map, const LdrToHdrParams& params) {
  EquirectMap out = map;
  for (float& value : out.image().pixels()) {
    value = static_cast<float>(ldr_to_hdr_value(value, params));
  }
  return out;
}

void check_rotation(const Mat3& r) {
  if (!r.allFinite() || !(r * r.transpose()).isApprox(Mat3::Identity(), 1e-6) ||
      std::abs(r.determinant() - 1.0) > 1e-6) {
    throw ArgumentError("matrix is not a proper rotation");
  }
}

Mat3 azimuth_rotation(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
}

EquirectMap rotate_equirect(const EquirectMap& map, const Mat3& r) {
  check_rotation(r);
  EquirectMap out(map.height());
  const Mat3 rt = r.transpose();
  parallel_for(static_cast<std::size_t>(map.height()), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < map.width(); ++u) out.set_texel(u, v, map.sample(rt * out.texel_dir(u, v)));
  }, 8);
  return out;
}

sh::SampleSet sample_sphere(int n, SamplingStrategy strategy, std::uint64_t seed, int l_max) {
  if (n < 1) throw ArgumentError("sample count must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> dirs;
  std::vector<double> weights;
  dirs.reserve(static_cast<std::size_t>(n));
  weights.reserve(static_cast<std::size_t>(n));

  switch (strategy) {
    case SamplingStrategy::kEqualArea: {
      const Mat3 rot = random_rotation(rng);
      const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
      for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double frac = i * golden;
        frac -= std::floor(frac);
        const double phi = kTwoPi * frac;
        dirs.push_back((rot * Vec3(r * std::cos(phi), r * std::sin(phi), z)).normalized());
        weights.push_back(4.0 * kPi / n);
      }
      break;
    }
    case SamplingStrategy::kEquirectSinWeighted: {
      const int rows = std::max(1, static_cast<int>(std::lround(std::sqrt(n / 2.0))));
      for (int r = 0; r < rows; ++r) {
        const long long lo = static_cast<long long>(r) * n / rows;
        const long long hi = static_cast<long long>(r + 1) * n / rows;
        const int count = static_cast<int>(hi - lo);
        for (int j = 0; j < count; ++j) {
          const double theta = kPi * (r + unit(rng)) / rows;
          const double phi = kTwoPi * (j + unit(rng)) / count;
          dirs.push_back(uv_to_dir(phi / kTwoPi, theta / kPi, 1, 1).normalized());
          weights.push_back(std::sin(theta) * (kPi / rows) * (kTwoPi / count));
        }
      }
      double total = 0.0;
      for (double w : weights) total += w;
      for (double& w : weights) w *= 4.0 * kPi / total;
      break;
    }
    case SamplingStrategy::kUniformUv: {
      for (int i = 0; i < n; ++i) {
        const double u = unit(rng);
        const double v = unit(rng);
        dirs.push_back(uv_to_dir(u, v, 1, 1).normalized());
        weights.push_back(4.0 * kPi / n);
      }
      break;
    }
  }
  return sh::SampleSet(std::move(dirs), std::move(weights), l_max);
}

sh::SampleSet texel_grid_samples(int height, int l_max) {
  if (height < 1) throw ArgumentError("grid height must be positive");
  const int width = 2 * height;
  std::vector<Vec3> dirs;
  std::vector<double> weights;
  dirs.reserve(static_cast<std::size_t>(width) * height);
  weights.reserve(dirs.capacity());
  double total = 0.0;
  for (int v = 0; v < height; ++v) {
    const double w = std::sin(kPi * (v + 0.5) / height);
    for (int u = 0; u < width; ++u) {
      dirs.push_back(uv_to_dir(u + 0.5, v + 0.5, width, height).normalized());
      weights.push_back(w);
      total += w;
    }
  }
  for (double& w : weights) w *= 4.0 * kPi / total;
  return sh::SampleSet(std::move(dirs), std::move(weights), l_max);
}

Eigen::MatrixX3d lookup(const EquirectMap& map, const sh::SampleSet& samples) {
  Eigen::MatrixX3d values(static_cast<Eigen::Index>(samples.size()), 3);
  const auto& dirs = samples.dirs();
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    values.row(static_cast<Eigen::Index>(i)) = map.sample(dirs[i]).matrix().transpose();
  }
  return values;
}

sh::ShCoeffs envmap_to_sh(const EquirectMap& map, int l_max, const sh::SampleSet& samples,
                          sh::ProjectionMethod method) {
  return sh::project(samples, lookup(map, samples), l_max, method);
}

EquirectMap sh_to_envmap(const sh::ShCoeffs& coeffs, int out_height) {
  EquirectMap out(out_height);
  const int k = coeffs.size();
  const Eigen::MatrixXd ct = coeffs.data().transpose();  // 3 x K
  parallel_for(static_cast<std::size_t>(out_height), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    Eigen::VectorXd basis(k);
    for (int u = 0; u < out.width(); ++u) {
      sh::eval_basis_into(coeffs.l_max(), out.texel_dir(u, v),
                          {basis.data(), static_cast<std::size_t>(k)});
      out.set_texel(u, v, (ct * basis).array());
    }
  }, 8);
  return out;
}

}  // namespace srl::env
