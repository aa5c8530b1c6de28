#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pedfit/body_model.hpp"
#include "pedfit/stereo.hpp"
#include "support.hpp"

using namespace pedfit;
using std::numbers::pi;

namespace {

// Rodrigues written out independently of the library.
Mat3 rodrigues(const Vec3& w) {
  const double th = w.norm();
  if (th < 1e-12) return Mat3::Identity();
  const Vec3 k = w / th;
  Mat3 K;
  K << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Mat3::Identity() + std::sin(th) * K + (1 - std::cos(th)) * K * K;
}

}  // namespace

TEST_CASE("axis-angle round trip and Rodrigues oracle") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 w(u(rng), u(rng), u(rng));
    w *= (pi - 1e-3) * std::abs(u(rng)) / w.norm();
    const Mat3 r = axis_angle_to_matrix(w);
    CHECK((r - rodrigues(w)).norm() < 1e-12);
    CHECK(is_rotation(r));
    CHECK((matrix_to_axis_angle(r) - w).norm() < 1e-9);
  }
  CHECK(axis_angle_to_matrix(Vec3::Zero()).isIdentity(0.0));
  // near pi the axis sign is ambiguous but the rotation is not
  const Vec3 w(0.0, pi, 0.0);
  CHECK((axis_angle_to_matrix(matrix_to_axis_angle(axis_angle_to_matrix(w))) -
         axis_angle_to_matrix(w)).norm() < 1e-9);
}

TEST_CASE("yaw helpers") {
  CHECK(yaw_between(Vec3::UnitZ(), Vec3::UnitZ()) == doctest::Approx(0.0));
  CHECK(std::abs(yaw_between(Vec3::UnitZ(), -Vec3::UnitZ())) == doctest::Approx(pi));
  const Vec3 d = yaw_rotation(0.7) * Vec3::UnitZ();
  CHECK(yaw_between(Vec3::UnitZ(), d) == doctest::Approx(0.7));
}

TEST_CASE("shape_skeleton is linear in the basis") {
  const SkeletonTemplate t = default_template();
  const ShapedSkeleton zero = shape_skeleton(t, Eigen::VectorXd::Zero(t.shape_dim()));
  for (int j = 0; j < kNumJoints; ++j) CHECK(zero.joints[j] == t.joints[j]);

  // Basis 0 is a uniform stature scale about the root: +4% per unit.
  Eigen::VectorXd b = Eigen::VectorXd::Zero(t.shape_dim());
  b[0] = 1.0;
  const ShapedSkeleton s = shape_skeleton(t, b);
  for (int j = 0; j < kNumJoints; ++j) {
    CHECK((s.joints[j] - (t.joints[j] + t.shape_basis[0][j])).norm() < 1e-15);
    CHECK(s.joints[j].y() == doctest::Approx(1.04 * t.joints[j].y()).epsilon(1e-12));
  }
  CHECK_THROWS_AS(shape_skeleton(t, Eigen::VectorXd::Zero(t.shape_dim() + 1)), DimensionError);

  // radii clamp at 1 mm
  Eigen::VectorXd thin = Eigen::VectorXd::Zero(t.shape_dim());
  thin[9] = -1e3;
  const ShapedSkeleton c = shape_skeleton(t, thin);
  for (int j = 1; j < kNumJoints; ++j) CHECK(c.bone_radius[j] >= kMinBoneRadius);
}

TEST_CASE("forward kinematics oracles") {
  const SkeletonTemplate t = default_template();
  BodyParams p = BodyParams::zeros(t.shape_dim());
  const PosedBody rest = forward_kinematics(t, p);
  for (int j = 0; j < kNumJoints; ++j) CHECK((rest.joints[j] - t.joints[j]).norm() < 1e-15);
  CHECK(rest.surface_points.size() == static_cast<size_t>(kNumBones * t.samples_per_bone));

  SUBCASE("root yaw by pi negates x and z about the root") {
    p.set_joint_rotation(0, Vec3(0.0, pi, 0.0));
    const PosedBody b = forward_kinematics(t, p);
    for (int j = 0; j < kNumJoints; ++j) {
      const Vec3 rel = t.joints[j] - t.joints[0];
      const Vec3 got = b.joints[j] - b.joints[0];
      CHECK(got.x() == doctest::Approx(-rel.x()).epsilon(1e-12).scale(1.0));
      CHECK(got.y() == doctest::Approx(rel.y()).epsilon(1e-12).scale(1.0));
      CHECK(got.z() == doctest::Approx(-rel.z()).epsilon(1e-12).scale(1.0));
    }
    // left keypoints move to -x, labels stay
    CHECK(rest.keypoints[kKpLShoulder].x() > 0.0);
    CHECK(b.keypoints[kKpLShoulder].x() == doctest::Approx(-rest.keypoints[kKpLShoulder].x()));
  }
  SUBCASE("translation shifts everything exactly") {
    p.translation = Vec3(0, 0, 20);
    const PosedBody b = forward_kinematics(t, p);
    for (int j = 0; j < kNumJoints; ++j)
      CHECK((b.joints[j] - (t.joints[j] + Vec3(0, 0, 20))).norm() < 1e-12);
  }
}

TEST_CASE("rigid equivariance and bone lengths") {
  const SkeletonTemplate t = default_template();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    BodyParams p = testing::random_params(rng, t.shape_dim());
    const PosedBody a = forward_kinematics(t, p);
    const ShapedSkeleton s = shape_skeleton(t, p.shape);
    for (int j = 1; j < kNumJoints; ++j) {
      const double rest_len = (s.joints[j] - s.joints[t.parent[j]]).norm();
      CHECK(std::abs((a.joints[j] - a.joints[t.parent[j]]).norm() - rest_len) < 1e-9);
    }
    // apply a global rotation R and shift v through root pose and translation
    const Mat3 R = axis_angle_to_matrix(Vec3(0.2, -1.1, 0.4));
    const Vec3 v(1.0, -0.5, 3.0);
    BodyParams q = p;
    q.set_joint_rotation(0, matrix_to_axis_angle(R * axis_angle_to_matrix(p.joint_rotation(0))));
    const Vec3 root = a.joints[0];
    q.translation = R * root + v - s.joints[0];
    const PosedBody b = forward_kinematics(t, q);
    for (int j = 0; j < kNumJoints; ++j)
      CHECK((b.joints[j] - (R * a.joints[j] + v)).norm() < 1e-9);
    for (int k = 0; k < kNumKeypoints; ++k)
      CHECK((b.keypoints[k] - (R * a.keypoints[k] + v)).norm() < 1e-9);
    // surface samples stay within their capsule radius of the bone segment
    const auto layout = surface_layout(t);
    for (size_t m = 0; m < layout.size(); ++m) {
      const int bone = layout[m].bone;
      const Vec3 pa = a.joints[t.parent[bone]], pb = a.joints[bone];
      const double u = std::clamp((a.surface_points[m] - pa).dot(pb - pa) / (pb - pa).squaredNorm(),
                                  0.0, 1.0);
      CHECK((a.surface_points[m] - (pa + u * (pb - pa))).norm() <= s.bone_radius[bone] + 1e-9);
    }
  }
}

TEST_CASE("keypoint and surface Jacobians match finite differences") {
  const SkeletonTemplate t = default_template();
  std::mt19937_64 rng(9);
  const int b = t.shape_dim();
  for (int i = 0; i < 5; ++i) {
    const BodyParams p = testing::random_params(rng, b);
    const Kinematics kin(t, p);
    for (int k : {int(kKpHead), int(kKpLWrist), int(kKpRAnkle), int(kKpREar)}) {
      const Eigen::MatrixXd J = kin.keypoint_jacobian(k);
      for (int c = 0; c < 3; ++c) {
        const auto f = [&](const Eigen::VectorXd& v) {
          return forward_kinematics(t, BodyParams::unpack(v, b)).keypoints[k][c];
        };
        CHECK(testing::relative_error(J.row(c).transpose(), testing::numeric_gradient(f, p.pack())) <
              1e-6);
      }
    }
    for (int m : {0, 37, 200, t.surface_size() - 1}) {
      const Eigen::MatrixXd J = kin.surface_jacobian(m);
      for (int c = 0; c < 3; ++c) {
        const auto f = [&](const Eigen::VectorXd& v) {
          return forward_kinematics(t, BodyParams::unpack(v, b)).surface_points[m][c];
        };
        CHECK(testing::relative_error(J.row(c).transpose(), testing::numeric_gradient(f, p.pack())) <
              1e-6);
      }
    }
  }
}

TEST_CASE("template validation and pack layout") {
  SkeletonTemplate t = default_template();
  CHECK_NOTHROW(t.validate());
  t.bone_radius[3] = 0.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  std::mt19937_64 rng(2);
  const BodyParams p = testing::random_params(rng, 10);
  const Eigen::VectorXd x = p.pack();
  CHECK(x.size() == 85);
  CHECK(x.segment<3>(translation_offset(10)) == p.translation);
  const BodyParams q = BodyParams::unpack(x, 10);
  CHECK(q.pack() == x);
  CHECK_THROWS_AS(BodyParams::unpack(x, 9), DimensionError);
}

// ----------------------------------------------------------------- stereo

TEST_CASE("pinhole projection oracles") {
  StereoRig rig;
  rig.focal = 1000.0;
  rig.baseline = 0.5;
  const Vec3 on_axis = rig.camera_to_global(Vec3(0, 0, 20), Side::kLeft);
  const Projection l = project(rig, on_axis, Side::kLeft);
  const Projection r = project(rig, on_axis, Side::kRight);
  CHECK(l.in_front);
  CHECK((l.pixel - rig.principal_point).norm() < 1e-12);
  CHECK(l.pixel.x() - r.pixel.x() == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(depth_from_disparity(rig, 25.0) == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(depth_from_disparity(rig, rig.focal * rig.baseline) == 1.0);
  CHECK_THROWS_AS(depth_from_disparity(rig, 0.0), GeometryError);
  CHECK_THROWS_AS(depth_from_disparity(rig, -1.0), GeometryError);
  CHECK_FALSE(project(rig, rig.camera_to_global(Vec3(0, 0, -1), Side::kLeft), Side::kLeft).in_front);

  const Vec3 p = triangulate(rig, Eigen::Vector2d(2048 + 25, 1500), Eigen::Vector2d(2048, 1500));
  CHECK(rig.global_to_camera(p, Side::kLeft).z() == doctest::Approx(20.0));
  CHECK_THROWS_AS(triangulate(rig, Eigen::Vector2d(100, 10), Eigen::Vector2d(100, 10)),
                  GeometryError);
}

TEST_CASE("triangulate inverts project and disparity decreases with depth") {
  const StereoRig rig = default_rig();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> depth(5.0, 45.0), lat(-3.0, 3.0);
  double last_disp = 1e9;
  for (int i = 0; i < 500; ++i) {
    const Vec3 pc(lat(rng), lat(rng) * 0.3, depth(rng));
    const Vec3 g = rig.camera_to_global(pc, Side::kLeft);
    const Vec3 back = triangulate(rig, project(rig, g, Side::kLeft).pixel,
                                  project(rig, g, Side::kRight).pixel);
    CHECK((back - g).norm() < 1e-9);
  }
  for (double z = 5.0; z <= 45.0; z += 1.0) {
    const Vec3 g = rig.camera_to_global(Vec3(0.3, 0.2, z), Side::kLeft);
    const double d = project(rig, g, Side::kLeft).pixel.x() - project(rig, g, Side::kRight).pixel.x();
    CHECK(d < last_disp);
    last_disp = d;
  }
}

TEST_CASE("projection Jacobian and rig transforms") {
  const StereoRig rig = default_rig();
  CHECK_NOTHROW(rig.validate());
  const Vec3 g = rig.camera_to_global(Vec3(0.7, -0.4, 18.0), Side::kLeft);
  for (Side side : {Side::kLeft, Side::kRight}) {
    const auto J = project_jacobian(rig, g, side);
    for (int r = 0; r < 2; ++r) {
      const auto f = [&](const Eigen::VectorXd& v) { return project(rig, Vec3(v), side).pixel[r]; };
      CHECK(testing::relative_error(J.row(r).transpose(), testing::numeric_gradient(f, g)) < 1e-7);
    }
  }
  const RigidTransform t = rig.cam_to_global;
  const Vec3 x(1, 2, 3);
  CHECK((t.inverse().apply(t.apply(x)) - x).norm() < 1e-12);
  CHECK(((t * t.inverse()).rotation - Mat3::Identity()).norm() < 1e-12);
  const Vec3 back = back_project(rig, project(rig, g, Side::kLeft).pixel, 18.0);
  CHECK((back - g).norm() < 1e-9);

  StereoRig bad = rig;
  bad.baseline = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = rig;
  bad.cam_to_global.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
