#pragma once

#include <Eigen/Dense>

namespace pedfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

Mat3 skew(const Vec3& v);

/// Rodrigues formula. Exact identity for the zero vector.
Mat3 axis_angle_to_matrix(const Vec3& axis_angle);

/// Inverse of axis_angle_to_matrix; returns an angle in [0, pi].
Vec3 matrix_to_axis_angle(const Mat3& rotation);

/// Left Jacobian of SO(3): exp(a + d) ~= exp([J_l(a) d]x) exp(a) to first order.
/// Its columns are the global angular-velocity directions of an axis-angle
/// parameterization.
Mat3 so3_left_jacobian(const Vec3& axis_angle);

/// Rotation about the vertical (+y) axis.
Mat3 yaw_rotation(double angle);

/// Signed angle that rotates `from` onto `to` about +y, both projected to the
/// horizontal plane.
double yaw_between(const Vec3& from, const Vec3& to);

bool is_rotation(const Mat3& rotation, double tol = 1e-9);

}  // namespace pedfit
