#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace srl {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
// Linear RGB radiance triple.
using Rgb = Eigen::Array3d;

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace srl
