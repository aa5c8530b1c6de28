#include "pedfit/stereo.hpp"

#include <cmath>
#include <string>

namespace pedfit {

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

void StereoRig::validate() const {
  if (!(focal > 0.0)) throw std::invalid_argument("rig: focal must be positive");
  if (!(baseline > 0.0)) throw std::invalid_argument("rig: baseline must be positive");
  if (image_size.x() <= 0 || image_size.y() <= 0)
    throw std::invalid_argument("rig: image size must be positive");
  if (!is_rotation(cam_to_global.rotation, 1e-6))
    throw std::invalid_argument("rig: cam_to_global rotation is not a proper rotation");
  if (!is_rotation(lidar_to_cam.rotation, 1e-6))
    throw std::invalid_argument("rig: lidar_to_cam rotation is not a proper rotation");
}

Vec3 StereoRig::global_to_camera(const Vec3& p_global, Side side) const {
  Vec3 c = cam_to_global.rotation.transpose() * (p_global - cam_to_global.translation);
  if (side == Side::kRight) c.x() -= baseline;
  return c;
}

Vec3 StereoRig::camera_to_global(const Vec3& p_cam, Side side) const {
  Vec3 c = p_cam;
  if (side == Side::kRight) c.x() += baseline;
  return cam_to_global.apply(c);
}

Vec3 StereoRig::lidar_to_global(const Vec3& p_lidar) const {
  return cam_to_global.apply(lidar_to_cam.apply(p_lidar));
}

Vec3 StereoRig::lidar_origin_global() const { return lidar_to_global(Vec3::Zero()); }

bool StereoRig::in_image(const Eigen::Vector2d& px) const {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < image_size.x() && px.y() < image_size.y();
}

Projection project(const StereoRig& rig, const Vec3& point_global, Side side) {
  const Vec3 c = rig.global_to_camera(point_global, side);
  Projection out;
  out.in_front = c.z() > 0.0;
  if (c.z() != 0.0) {
    out.pixel = Eigen::Vector2d(rig.focal * c.x() / c.z(), rig.focal * c.y() / c.z()) +
                rig.principal_point;
  }
  return out;
}

Eigen::Matrix<double, 2, 3> project_jacobian(const StereoRig& rig, const Vec3& point_global,
                                             Side side) {
  const Vec3 c = rig.global_to_camera(point_global, side);
  const double iz = 1.0 / c.z();
  Eigen::Matrix<double, 2, 3> dpx_dc;
  dpx_dc << rig.focal * iz, 0.0, -rig.focal * c.x() * iz * iz,
      0.0, rig.focal * iz, -rig.focal * c.y() * iz * iz;
  return dpx_dc * rig.cam_to_global.rotation.transpose();
}

double depth_from_disparity(const StereoRig& rig, double disparity) {
  if (!(disparity > 0.0))
    throw GeometryError("nonpositive disparity " + std::to_string(disparity));
  return rig.focal * rig.baseline / disparity;
}

Vec3 back_project(const StereoRig& rig, const Eigen::Vector2d& left_px, double depth) {
  const Eigen::Vector2d n = (left_px - rig.principal_point) / rig.focal;
  return rig.camera_to_global(Vec3(n.x() * depth, n.y() * depth, depth), Side::kLeft);
}

Vec3 triangulate(const StereoRig& rig, const Eigen::Vector2d& left_px,
                 const Eigen::Vector2d& right_px) {
  const double disparity = left_px.x() - right_px.x();
  const double depth = depth_from_disparity(rig, disparity);
  // rectified rows agree up to label noise; use their mean
  const Eigen::Vector2d px(left_px.x(), 0.5 * (left_px.y() + right_px.y()));
  return back_project(rig, px, depth);
}

StereoRig default_rig() {
  StereoRig rig;
  rig.focal = 2000.0;
  rig.principal_point = Eigen::Vector2d(2048.0, 1500.0);
  rig.baseline = 0.5;
  rig.image_size = Eigen::Vector2i(4096, 3000);
  // camera x -> global -x, camera y (down) -> global -y, camera z -> global +z
  rig.cam_to_global.rotation = Eigen::Vector3d(-1.0, -1.0, 1.0).asDiagonal();
  rig.cam_to_global.translation = Vec3(0.0, 1.6, 0.0);
  // lidar mounted 0.3 m above the left camera, axes aligned with it
  rig.lidar_to_cam.rotation = Mat3::Identity();
  rig.lidar_to_cam.translation = Vec3(0.25, -0.3, 0.0);
  return rig;
}

}  // namespace pedfit
