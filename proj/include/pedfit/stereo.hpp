#pragma once

#include <stdexcept>

#include <Eigen/Dense>

#include "pedfit/rotation.hpp"

namespace pedfit {

/// x_to = rotation * x_from + translation
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;
};

enum class Side { kLeft, kRight };

struct GeometryError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Rectified stereo pair. The right camera sits `baseline` meters along the
/// left camera's +x axis. Camera frames are x right, y down, z forward.
struct StereoRig {
  double focal = 2000.0;                     // px
  Eigen::Vector2d principal_point{2048.0, 1500.0};  // px
  double baseline = 0.5;                     // m
  Eigen::Vector2i image_size{4096, 3000};    // px
  RigidTransform cam_to_global;              // left camera -> global
  RigidTransform lidar_to_cam;               // lidar -> left camera

  void validate() const;  // throws std::invalid_argument

  Vec3 global_to_camera(const Vec3& p_global, Side side) const;
  Vec3 camera_to_global(const Vec3& p_cam, Side side) const;
  Vec3 lidar_to_global(const Vec3& p_lidar) const;
  Vec3 lidar_origin_global() const;
  bool in_image(const Eigen::Vector2d& px) const;
};

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  bool in_front = false;
};

Projection project(const StereoRig& rig, const Vec3& point_global, Side side);

/// Jacobian of the pixel w.r.t. the global point; requires positive depth.
Eigen::Matrix<double, 2, 3> project_jacobian(const StereoRig& rig, const Vec3& point_global,
                                             Side side);

/// Throws GeometryError when disparity (left_x - right_x) is not positive.
Vec3 triangulate(const StereoRig& rig, const Eigen::Vector2d& left_px,
                 const Eigen::Vector2d& right_px);

double depth_from_disparity(const StereoRig& rig, double disparity);

/// Left pixel back-projected at a given depth (left camera z), global frame.
Vec3 back_project(const StereoRig& rig, const Eigen::Vector2d& left_px, double depth);

/// Reference synthetic rig: 12 MP rectified pair, left camera 1.6 m above the
/// ground looking along global +z. Global frame is y-up with the ground at y = 0.
StereoRig default_rig();

}  // namespace pedfit
