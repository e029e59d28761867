#include "srl/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "srl/error.hpp"
#include "srl/parallel.hpp"

namespace srl::raster {

namespace {

constexpr int kTile = 16;

struct Splat {
  double mx, my;          // projected mean, pixels
  double ca, cb, cc;      // inverse 2D covariance (conic)
  double opacity;
  double depth;
  Rgb color;
  int x0, y0, x1, y1;     // inclusive pixel bounds
  std::size_t index;
  bool visible = false;
};

Splat project_gaussian(const splat::Gaussian& g, std::size_t index, const Camera& cam,
                       const Vec3& cam_center, int l_max, std::vector<double>& basis) {
  Splat s;
  s.index = index;
  const Vec3 p = cam.rotation * g.position + cam.translation;
  if (p.z() <= kNearPlane) return s;

  // Clamp the Jacobian's evaluation point as stock rasterizers do, so that
  // splats far outside the frustum do not blow up.
  const double lim_x = 1.3 * 0.5 * cam.width / cam.fx;
  const double lim_y = 1.3 * 0.5 * cam.height / cam.fy;
  const double tx = std::clamp(p.x() / p.z(), -lim_x, lim_x) * p.z();
  const double ty = std::clamp(p.y() / p.z(), -lim_y, lim_y) * p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / p.z(), 0.0, -cam.fx * tx / (p.z() * p.z()),
       0.0, cam.fy / p.z(), -cam.fy * ty / (p.z() * p.z());
  const Eigen::Matrix<double, 2, 3> t = j * cam.rotation;
  Eigen::Matrix2d cov = t * g.covariance() * t.transpose();
  cov(0, 0) += kCovarianceFloor;
  cov(1, 1) += kCovarianceFloor;
  const double det = cov.determinant();
  if (!(det > 0.0)) return s;
  s.ca = cov(1, 1) / det;
  s.cb = -cov(0, 1) / det;
  s.cc = cov(0, 0) / det;

  s.mx = cam.fx * p.x() / p.z() + cam.cx;
  s.my = cam.fy * p.y() / p.z() + cam.cy;
  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
  const double radius = std::ceil(3.0 * std::sqrt(lambda));
  s.x0 = std::max(0, static_cast<int>(std::floor(s.mx - radius)));
  s.y0 = std::max(0, static_cast<int>(std::floor(s.my - radius)));
  s.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(s.mx + radius)));
  s.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(s.my + radius)));
  if (s.x0 > s.x1 || s.y0 > s.y1) return s;

  const Vec3 view = g.position - cam_center;
  const double vn = view.norm();
  const Vec3 dir = vn > 0.0 ? Vec3(view / vn) : Vec3::UnitZ();
  sh::eval_basis_into(l_max, dir, basis);
  const int k = sh::coeff_count(l_max);
  const Eigen::Map<const Eigen::VectorXd> b(basis.data(), k);
  s.color = (g.sh.data().transpose() * b).array().max(0.0);
  s.opacity = g.opacity;
  s.depth = p.z();
  s.visible = true;
  return s;
}

}  // namespace

bool Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ArgumentError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw ArgumentError("camera image size must be positive");
  if (!rotation.allFinite() || !translation.allFinite() ||
      !(rotation * rotation.transpose()).isApprox(Mat3::Identity(), 1e-6) ||
      std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw ArgumentError("camera rotation is not a proper rotation");
  }
  return cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y,
                       int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.unitOrthogonal();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

RenderOutput render(const splat::GaussianModel& model, const Camera& camera,
                    const RenderOptions& options) {
  camera.validate();
  if (!options.skip.empty() && options.skip.size() != model.size()) {
    throw ArgumentError("render skip flags must match the model size");
  }
  if (options.weight_mask != nullptr &&
      (options.weight_mask->width != camera.width || options.weight_mask->height != camera.height)) {
    throw ArgumentError(fmt::format("mask is {}x{} but camera is {}x{}", options.weight_mask->width,
                                    options.weight_mask->height, camera.width, camera.height));
  }
  const int w = camera.width;
  const int h = camera.height;
  RenderOutput out;
  out.color = Image(w, h, 3);
  out.alpha = Image(w, h, 1);
  if (options.record_weights) out.per_gaussian_weight.assign(model.size(), 0.0);

  // Project.
  std::vector<Splat> splats(model.size());
  const Vec3 cam_center = camera.center();
  parallel_for_chunks(model.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> basis(static_cast<std::size_t>(sh::coeff_count(model.l_max)));
    for (std::size_t i = begin; i < end; ++i) {
      if (!options.skip.empty() && options.skip[i] != 0) continue;
      splats[i] = project_gaussian(model.gaussians[i], i, camera, cam_center, model.l_max, basis);
    }
  }, 256);

  // Global depth sort, ties broken by index.
  std::vector<std::size_t> order;
  order.reserve(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    if (splats[i].visible) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
    return a < b;
  });

  // Bin into tiles in sorted order.
  const int tiles_x = (w + kTile - 1) / kTile;
  const int tiles_y = (h + kTile - 1) / kTile;
  std::vector<std::vector<std::uint32_t>> tiles(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t idx : order) {
    const Splat& s = splats[idx];
    for (int ty = s.y0 / kTile; ty <= s.y1 / kTile; ++ty) {
      for (int tx = s.x0 / kTile; tx <= s.x1 / kTile; ++tx) {
        tiles[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(idx));
      }
    }
  }

  // Composite each tile; weights go to per-tile slots and are reduced in
  // tile order afterwards so the result does not depend on scheduling.
  std::vector<std::vector<double>> tile_weights(options.record_weights ? tiles.size() : 0);
  parallel_for(tiles.size(), [&](std::size_t t) {
    const auto& list = tiles[t];
    std::vector<double>* weights = nullptr;
    if (options.record_weights) {
      tile_weights[t].assign(list.size(), 0.0);
      weights = &tile_weights[t];
    }
    const int tx = static_cast<int>(t % static_cast<std::size_t>(tiles_x));
    const int ty = static_cast<int>(t / static_cast<std::size_t>(tiles_x));
    for (int py = ty * kTile; py < std::min(h, (ty + 1) * kTile); ++py) {
      for (int px = tx * kTile; px < std::min(w, (tx + 1) * kTile); ++px) {
        const double mask_value =
            options.weight_mask != nullptr ? (options.weight_mask->at(px, py) ? 1.0 : 0.0) : 1.0;
        double transmittance = 1.0;
        Rgb color = Rgb::Zero();
        const double fx = px + 0.5;
        const double fy = py + 0.5;
        for (std::size_t n = 0; n < list.size(); ++n) {
          const Splat& s = splats[list[n]];
          if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
          const double dx = fx - s.mx;
          const double dy = fy - s.my;
          const double power = -0.5 * (s.ca * dx * dx + s.cc * dy * dy) - s.cb * dx * dy;
          if (power > 0.0) continue;
          const double alpha = std::min(kMaxAlpha, s.opacity * std::exp(power));
          if (alpha < kMinAlpha) continue;
          const double weight = alpha * transmittance;
          color += weight * s.color;
          if (weights != nullptr) (*weights)[n] += mask_value * weight;
          transmittance *= 1.0 - alpha;
          if (transmittance < kMinTransmittance) break;
        }
        const Rgb final = color + transmittance * options.background;
        out.color.set_rgb(px, py, final);
        out.alpha.at(px, py, 0) = static_cast<float>(1.0 - transmittance);
      }
    }
  }, 1);

  if (options.record_weights) {
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      const auto& list = tiles[t];
      for (std::size_t n = 0; n < list.size(); ++n) {
        out.per_gaussian_weight[list[n]] += tile_weights[t][n];
      }
    }
  }
  return out;
}

Camera face_camera(int face, const Vec3& center, int face_res) {
  const env::FaceFrame& f = env::face_frame(face);
  Camera cam;
  cam.rotation.row(0) = f.right.transpose();
  cam.rotation.row(1) = (-f.up).transpose();
  cam.rotation.row(2) = f.forward.transpose();
  cam.translation = -cam.rotation * center;
  cam.width = cam.height = face_res;
  cam.fx = cam.fy = 0.5 * face_res;
  cam.cx = cam.cy = 0.5 * face_res;
  return cam;
}

env::CubeMap render_cubemap(const splat::GaussianModel& model, const Vec3& center, int face_res,
                            const CaptureOptions& options) {
  env::CubeMap cube(face_res);
  cube.enable_alpha();
  RenderOptions ro;
  ro.background = options.background;
  if (!options.exclude.empty()) {
    ro.skip.assign(model.size(), 0);
    for (std::size_t i : options.exclude) {
      if (i >= model.size()) throw ArgumentError("capture exclusion index out of range");
      ro.skip[i] = 1;
    }
  }
  for (int f = 0; f < env::kCubeFaces; ++f) {
    RenderOutput r = render(model, face_camera(f, center, face_res), ro);
    cube.face(f) = std::move(r.color);
    cube.alpha(f) = std::move(r.alpha);
  }
  return cube;
}

MaskStats accumulate_mask_stats(const splat::GaussianModel& model,
                                const std::vector<Camera>& cameras,
                                const std::vector<BinaryMask>& masks) {
  if (cameras.size() != masks.size()) {
    throw ArgumentError(fmt::format("{} cameras but {} masks", cameras.size(), masks.size()));
  }
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    if (masks[k].width != cameras[k].width || masks[k].height != cameras[k].height) {
      throw ArgumentError(fmt::format("mask {} is {}x{} but its camera is {}x{}", k,
                                      masks[k].width, masks[k].height, cameras[k].width,
                                      cameras[k].height));
    }
  }
  MaskStats stats;
  stats.numerator.assign(model.size(), 0.0);
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    const std::size_t covered = masks[k].count();
    stats.denominator += static_cast<double>(covered);
    if (covered == 0) continue;
    RenderOptions ro;
    ro.record_weights = true;
    ro.weight_mask = &masks[k];
    const RenderOutput r = render(model, cameras[k], ro);
    for (std::size_t j = 0; j < model.size(); ++j) stats.numerator[j] += r.per_gaussian_weight[j];
  }
  return stats;
}

}  // namespace srl::raster
