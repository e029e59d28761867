#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "srl/envmap.hpp"
#include "srl/splat_model.hpp"

namespace srl::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("srl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Vec3 random_dir(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

// Equirect map filled texelwise from f(direction).
template <typename F>
env::EquirectMap map_from(int height, F&& f) {
  env::EquirectMap map(height);
  for (int v = 0; v < map.height(); ++v) {
    for (int u = 0; u < map.width(); ++u) map.set_texel(u, v, f(map.texel_dir(u, v)));
  }
  return map;
}

// Smooth positive test environment with structure in all three channels.
inline Rgb smooth_radiance(const Vec3& d) {
  return Rgb(1.0 + 0.5 * d.z() + 0.3 * d.x() * d.y(), 0.8 + 0.4 * d.x() * d.x(),
             0.6 + 0.3 * std::sin(3.0 * d.y()) + 0.2 * d.z() * d.z());
}

// Ellipsoid-free flat splat with normal along `normal`.
inline splat::Gaussian surfel(const Vec3& position, const Vec3& normal, double size,
                              double opacity, const Rgb& dc_color, int l_max = 3) {
  splat::Gaussian g;
  g.position = position;
  g.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), normal.normalized()).normalized();
  g.scale = Vec3(size, size, 1e-3 * size);
  g.opacity = opacity;
  g.sh = sh::ShCoeffs::from_dc(dc_color / 0.28209479177387814, l_max);
  return g;
}

inline splat::Gaussian blob(const Vec3& position, double size, double opacity, const Rgb& dc_color,
                            int l_max = 3) {
  splat::Gaussian g;
  g.position = position;
  g.scale = Vec3::Constant(size);
  g.opacity = opacity;
  g.sh = sh::ShCoeffs::from_dc(dc_color / 0.28209479177387814, l_max);
  return g;
}

}  // namespace srl::testing
