#include "pedfit/rotation.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

namespace pedfit {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 axis_angle_to_matrix(const Vec3& axis_angle) {
  const double theta2 = axis_angle.squaredNorm();
  const Mat3 k = skew(axis_angle);
  if (theta2 < 1e-16) {
    // second-order series; exact at zero
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 matrix_to_axis_angle(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

Mat3 so3_left_jacobian(const Vec3& axis_angle) {
  const double theta2 = axis_angle.squaredNorm();
  const Mat3 k = skew(axis_angle);
  double a;
  double b;
  if (theta2 < 1e-8) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 yaw_rotation(double angle) {
  return axis_angle_to_matrix(Vec3(0.0, angle, 0.0));
}

double yaw_between(const Vec3& from, const Vec3& to) {
  const Eigen::Vector2d f(from.z(), from.x());
  const Eigen::Vector2d t(to.z(), to.x());
  // rotation about +y maps z toward x
  const double cross = f.x() * t.y() - f.y() * t.x();
  const double dot = f.dot(t);
  return std::atan2(cross, dot);
}

bool is_rotation(const Mat3& rotation, double tol) {
  return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol;
}

}  // namespace pedfit
