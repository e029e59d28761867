#include "srl/shadow.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "srl/error.hpp"
#include "srl/image_io.hpp"
#include "srl/parallel.hpp"

namespace srl::shadow {

namespace {

double luminance(const Rgb& c) { return 0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]; }

double degrees_to_radians(double d) { return d * kPi / 180.0; }

// Any unit vector orthogonal to n.
Vec3 orthogonal(const Vec3& n) {
  const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return (seed - n * n.dot(seed)).normalized();
}

}  // namespace

LobeResult dominant_lobes(const env::EquirectMap& map, const LobeOptions& options) {
  if (options.count < 1) throw ArgumentError("lobe count must be at least 1");
  if (options.smooth_degree < 0 || options.smooth_degree > sh::kMaxDegree) {
    throw ArgumentError("smoothing degree out of range");
  }
  if (options.grid_height < 8) throw ArgumentError("lobe grid height must be at least 8");
  map.validate(false);

  const auto samples = env::texel_grid_samples(map.height(), options.smooth_degree);
  const sh::ShCoeffs coeffs = env::envmap_to_sh(map, options.smooth_degree, samples);
  const int k = coeffs.size();
  Eigen::VectorXd lum(k);
  for (int i = 0; i < k; ++i) lum[i] = luminance(coeffs.data().row(i).transpose());

  const int h = options.grid_height;
  const int w = 2 * h;
  std::vector<double> values(static_cast<std::size_t>(w) * h);
  std::vector<Vec3> dirs(values.size());
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    std::vector<double> basis(static_cast<std::size_t>(k));
    for (int col = 0; col < w; ++col) {
      const Vec3 d = env::uv_to_dir(col + 0.5, static_cast<double>(row) + 0.5, w, h);
      sh::eval_basis_into(options.smooth_degree, d, basis);
      const std::size_t idx = row * static_cast<std::size_t>(w) + static_cast<std::size_t>(col);
      dirs[idx] = d;
      values[idx] = Eigen::Map<const Eigen::VectorXd>(basis.data(), k).dot(lum);
    }
  }, 8);

  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  LobeResult result;
  if (!(hi > 0.0) || (hi - lo) < options.min_contrast * std::abs(hi)) {
    result.status = "no dominant lobe";
    return result;
  }

  // Local maxima over the 8-neighbourhood (azimuth wraps, poles clamp).
  std::vector<std::size_t> candidates;
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const double v = values[static_cast<std::size_t>(row) * w + col];
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr) {
        const int r = row + dr;
        if (r < 0 || r >= h) continue;
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int c = (col + dc + w) % w;
          if (values[static_cast<std::size_t>(r) * w + c] > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back(static_cast<std::size_t>(row) * w + col);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  const double cos_radius = std::cos(degrees_to_radians(options.suppression_degrees));
  for (std::size_t idx : candidates) {
    if (static_cast<int>(result.lobes.size()) == options.count) break;
    if (values[idx] <= 0.0) break;
    const bool suppressed = std::any_of(result.lobes.begin(), result.lobes.end(),
                                        [&](const LightLobe& l) {
                                          return l.direction.dot(dirs[idx]) > cos_radius;
                                        });
    if (suppressed) continue;
    result.lobes.push_back({dirs[idx], values[idx], 0.0});
  }
  const double total = std::accumulate(result.lobes.begin(), result.lobes.end(), 0.0,
                                       [](double s, const LightLobe& l) { return s + l.intensity; });
  for (auto& l : result.lobes) l.weight = l.intensity / total;
  result.status = "ok";
  return result;
}

void ReceiverPlane::validate() const {
  if (!point.allFinite() || !normal.allFinite()) throw ArgumentError("receiver plane is not finite");
  if (std::abs(normal.norm() - 1.0) > 1e-6) throw ArgumentError("receiver plane normal must be unit length");
}

Vec3 ShadowMap::texel_center(int x, int y) const {
  const double su = ((x + 0.5) / res - 0.5) * extent;
  const double sv = ((y + 0.5) / res - 0.5) * extent;
  return origin + su * axis_u + sv * axis_v;
}

double ShadowMap::sample(const Vec3& p) const {
  const Vec3 rel = p - origin;
  const double fx = (rel.dot(axis_u) / extent + 0.5) * res - 0.5;
  const double fy = (rel.dot(axis_v) / extent + 0.5) * res - 0.5;
  if (fx < -0.5 || fy < -0.5 || fx > res - 0.5 || fy > res - 0.5) return 1.0;
  const double cx = std::clamp(fx, 0.0, res - 1.0);
  const double cy = std::clamp(fy, 0.0, res - 1.0);
  const int x0 = std::min(static_cast<int>(cx), res - 1);
  const int y0 = std::min(static_cast<int>(cy), res - 1);
  const int x1 = std::min(x0 + 1, res - 1);
  const int y1 = std::min(y0 + 1, res - 1);
  const double tx = cx - x0;
  const double ty = cy - y0;
  return (1 - ty) * ((1 - tx) * at(x0, y0) + tx * at(x1, y0)) +
         ty * ((1 - tx) * at(x0, y1) + tx * at(x1, y1));
}

std::optional<Vec3> ShadowMap::shadow_centroid() const {
  double total = 0.0;
  Vec3 acc = Vec3::Zero();
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double w = 1.0 - at(x, y);
      if (w <= 0.0) continue;
      total += w;
      acc += w * texel_center(x, y);
    }
  }
  if (total <= 0.0) return std::nullopt;
  return acc / total;
}

Vec3 ShadowMap::darkest_texel() const {
  const auto it = std::min_element(transmittance.begin(), transmittance.end());
  const auto idx = static_cast<int>(it - transmittance.begin());
  return texel_center(idx % res, idx / res);
}

ShadowMap project_shadow(const splat::GaussianModel& object, const LightLobe& lobe,
                         const ReceiverPlane& plane, const ProjectionOptions& options) {
  plane.validate();
  if (options.res < 1) throw ArgumentError("shadow map resolution must be positive");
  if (std::abs(lobe.direction.norm() - 1.0) > 1e-6) throw ArgumentError("lobe direction must be unit length");
  const Vec3& d = lobe.direction;
  const Vec3& n = plane.normal;
  const double dn = d.dot(n);
  if (std::abs(dn) < std::sin(degrees_to_radians(kMinGrazingDegrees))) {
    throw ArgumentError(fmt::format(
        "light direction is within {} degrees of the receiver plane; review the plane or lobe",
        kMinGrazingDegrees));
  }

  ShadowMap map;
  map.plane = plane;
  map.res = options.res;
  map.axis_u = orthogonal(n);
  map.axis_v = n.cross(map.axis_u);
  map.transmittance.assign(static_cast<std::size_t>(options.res) * options.res, 1.0);

  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  if (!object.empty()) {
    center = object.centroid();
    double max_scale = 0.0;
    for (const auto& g : object.gaussians) max_scale = std::max(max_scale, g.scale.maxCoeff());
    radius = object.bounding_radius() + 3.0 * max_scale;
  }
  if (options.center) {
    map.origin = *options.center - n * plane.signed_distance(*options.center);
  } else {
    map.origin = center - d * (plane.signed_distance(center) / dn);
  }
  map.extent = options.extent > 0.0 ? options.extent : 4.0 * radius;
  if (!(map.extent > 0.0)) map.extent = 1.0;
  if (object.empty()) return map;

  // Oblique projection onto the plane along d, then into map coordinates.
  const Mat3 along = Mat3::Identity() - d * n.transpose() / dn;
  Eigen::Matrix<double, 2, 3> to_map;
  to_map.row(0) = map.axis_u.transpose();
  to_map.row(1) = map.axis_v.transpose();
  const double texels_per_unit = map.res / map.extent;
  to_map *= texels_per_unit;
  const double floor = 0.3;  // texel^2, keeps sub-texel splats visible

  struct Footprint {
    Eigen::Vector2d mean;
    Eigen::Matrix2d inv_cov;
    double opacity;
    int x0, x1, y0, y1;
  };
  std::vector<Footprint> footprints;
  footprints.reserve(object.size());
  for (const auto& g : object.gaussians) {
    const double height = plane.signed_distance(g.position) / dn;
    if (height <= 0.0 || g.opacity <= 0.0) continue;  // not between light and plane
    const Eigen::Matrix<double, 2, 3> m = to_map * along;
    const Eigen::Vector2d mean =
        to_map * (along * (g.position - map.origin)) + Eigen::Vector2d::Constant(0.5 * map.res);
    Eigen::Matrix2d cov = m * g.covariance() * m.transpose();
    cov(0, 0) += floor;
    cov(1, 1) += floor;
    const double rx = 3.0 * std::sqrt(cov(0, 0));
    const double ry = 3.0 * std::sqrt(cov(1, 1));
    Footprint f{mean, cov.inverse(), std::min(g.opacity, 1.0),
                static_cast<int>(std::floor(mean.x() - rx)), static_cast<int>(std::ceil(mean.x() + rx)),
                static_cast<int>(std::floor(mean.y() - ry)), static_cast<int>(std::ceil(mean.y() + ry))};
    if (f.x1 < 0 || f.y1 < 0 || f.x0 >= map.res || f.y0 >= map.res) continue;
    f.x0 = std::max(f.x0, 0);
    f.y0 = std::max(f.y0, 0);
    f.x1 = std::min(f.x1, map.res - 1);
    f.y1 = std::min(f.y1, map.res - 1);
    footprints.push_back(f);
  }

  std::vector<std::vector<std::uint32_t>> rows(static_cast<std::size_t>(map.res));
  for (std::size_t i = 0; i < footprints.size(); ++i) {
    for (int y = footprints[i].y0; y <= footprints[i].y1; ++y) {
      rows[static_cast<std::size_t>(y)].push_back(static_cast<std::uint32_t>(i));
    }
  }
  parallel_for(rows.size(), [&](std::size_t y) {
    double* row = map.transmittance.data() + y * static_cast<std::size_t>(map.res);
    for (std::uint32_t i : rows[y]) {
      const Footprint& f = footprints[i];
      for (int x = f.x0; x <= f.x1; ++x) {
        const Eigen::Vector2d delta(x + 0.5 - f.mean.x(), static_cast<double>(y) + 0.5 - f.mean.y());
        const double power = -0.5 * delta.dot(f.inv_cov * delta);
        const double alpha = f.opacity * std::exp(power);
        row[x] *= 1.0 - alpha;
      }
    }
  }, 4);
  for (double& t : map.transmittance) t = std::clamp(t, 0.0, 1.0);
  return map;
}

BakeResult bake(const splat::GaussianModel& scene, const std::vector<ShadowMap>& maps,
                const std::vector<LightLobe>& lobes, double strength, const BakeOptions& options) {
  if (maps.size() != lobes.size()) throw ArgumentError("shadow maps and lobes differ in count");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ArgumentError("shadow strength must lie in [0, 1]");
  for (const auto& m : maps) m.plane.validate();

  BakeResult result;
  result.model = scene;
  double band = options.band;
  if (band <= 0.0 && !scene.empty()) {
    std::vector<double> scales;
    scales.reserve(scene.size());
    for (const auto& g : scene.gaussians) scales.push_back(g.scale.maxCoeff());
    auto mid = scales.begin() + static_cast<std::ptrdiff_t>(scales.size() / 2);
    std::nth_element(scales.begin(), mid, scales.end());
    band = 2.0 * *mid;
  }
  result.band = band;
  if (maps.empty() || strength == 0.0) return result;

  std::vector<std::uint8_t> excluded(scene.size(), 0);
  for (std::size_t i : options.exclude) {
    if (i >= scene.size()) throw ArgumentError("excluded index out of range");
    excluded[i] = 1;
  }
  std::vector<std::uint8_t> receiver(scene.size(), 0);
  parallel_for(scene.size(), [&](std::size_t i) {
    if (excluded[i]) return;
    auto& g = result.model.gaussians[i];
    double a = 0.0;
    bool inside = false;
    for (std::size_t k = 0; k < maps.size(); ++k) {
      const double dist = maps[k].plane.signed_distance(g.position);
      if (std::abs(dist) <= band) {
        inside = true;
        a += lobes[k].weight * maps[k].sample(g.position);
      } else {
        a += lobes[k].weight;
      }
    }
    if (!inside) return;
    receiver[i] = 1;
    const double factor = 1.0 - strength * (1.0 - std::clamp(a, 0.0, 1.0));
    if (factor != 1.0) g.sh.data() *= factor;
  }, 1024);
  result.receivers = static_cast<std::size_t>(std::count(receiver.begin(), receiver.end(), 1));
  return result;
}

Image to_image(const ShadowMap& map) {
  Image img(map.res, map.res, 1);
  for (int y = 0; y < map.res; ++y) {
    for (int x = 0; x < map.res; ++x) img.at(x, y, 0) = static_cast<float>(map.at(x, y));
  }
  return img;
}

void write_shadow_png(const ShadowMap& map, const std::filesystem::path& path) {
  io::write_png(to_image(map), path, false);
}

}  // namespace srl::shadow
