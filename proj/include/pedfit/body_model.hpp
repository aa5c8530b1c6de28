#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pedfit/rotation.hpp"

namespace pedfit {

inline constexpr int kNumJoints = 24;
inline constexpr int kNumBones = kNumJoints - 1;
inline constexpr int kPoseDim = 3 * kNumJoints;
inline constexpr int kNumKeypoints = 18;
inline constexpr int kDefaultShapeDim = 10;
inline constexpr int kDefaultSamplesPerBone = 16;

/// Thrown when vector lengths disagree with a model's dimensions.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Joint indices, SMPL kinematic ordering.
enum Joint : int {
  kPelvis = 0, kLHip, kRHip, kSpine1, kLKnee, kRKnee, kSpine2, kLAnkle, kRAnkle,
  kSpine3, kLFoot, kRFoot, kNeck, kLCollar, kRCollar, kHead, kLShoulder,
  kRShoulder, kLElbow, kRElbow, kLWrist, kRWrist, kLHand, kRHand
};

/// The 18 annotation keypoints: 14 body joints plus 4 facial points.
enum Keypoint : int {
  kKpHead = 0, kKpNeck, kKpRShoulder, kKpRElbow, kKpRWrist, kKpLShoulder,
  kKpLElbow, kKpLWrist, kKpRHip, kKpRKnee, kKpRAnkle, kKpLHip, kKpLKnee,
  kKpLAnkle, kKpREye, kKpLEye, kKpREar, kKpLEar
};

std::string_view joint_name(int joint);
std::string_view keypoint_name(int keypoint);
int keypoint_index(std::string_view name);  // -1 when unknown

using JointTable = std::array<Vec3, kNumJoints>;

struct KeypointBinding {
  int joint = 0;
  Vec3 offset = Vec3::Zero();  // in the joint's rest frame, meters
};

/// Procedural gender-neutral body. Geometry is y-up, body facing +z, left
/// side at +x. Bone i (i >= 1) spans parent[i] -> i and has radius
/// bone_radius[i]; entry 0 of the radius tables is unused.
struct SkeletonTemplate {
  std::array<int, kNumJoints> parent{};
  JointTable joints{};
  std::vector<JointTable> shape_basis;
  std::array<double, kNumJoints> bone_radius{};
  std::vector<std::array<double, kNumJoints>> radius_basis;
  std::array<KeypointBinding, kNumKeypoints> keypoints{};
  Vec3 forward_axis = Vec3::UnitZ();
  int samples_per_bone = kDefaultSamplesPerBone;

  int shape_dim() const { return static_cast<int>(shape_basis.size()); }
  int surface_size() const { return kNumBones * samples_per_bone; }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// Built-in template with `shape_dim` (<= 10) coefficients.
SkeletonTemplate default_template(int shape_dim = kDefaultShapeDim);

/// Ancestor chain of `joint` starting with the joint itself, ending at root.
std::vector<int> joint_chain(const SkeletonTemplate& tmpl, int joint);

struct ShapedSkeleton {
  JointTable joints{};
  std::array<double, kNumJoints> bone_radius{};
  std::array<bool, kNumJoints> radius_clamped{};
};

inline constexpr double kMinBoneRadius = 1e-3;

ShapedSkeleton shape_skeleton(const SkeletonTemplate& tmpl, const Eigen::VectorXd& shape);

/// Decision variables of the per-frame fit.
struct BodyParams {
  Eigen::Matrix<double, kPoseDim, 1> pose = Eigen::Matrix<double, kPoseDim, 1>::Zero();
  Eigen::VectorXd shape = Eigen::VectorXd::Zero(kDefaultShapeDim);
  Vec3 translation = Vec3::Zero();

  static BodyParams zeros(int shape_dim);

  Vec3 joint_rotation(int joint) const { return pose.segment<3>(3 * joint); }
  void set_joint_rotation(int joint, const Vec3& aa) { pose.segment<3>(3 * joint) = aa; }

  /// Packed layout: [pose (72) | shape (B) | translation (3)].
  int size() const { return kPoseDim + static_cast<int>(shape.size()) + 3; }
  Eigen::VectorXd pack() const;
  static BodyParams unpack(const Eigen::VectorXd& x, int shape_dim);
  bool all_finite() const;
};

inline int shape_offset() { return kPoseDim; }
inline int translation_offset(int shape_dim) { return kPoseDim + shape_dim; }

/// Surface sample layout, shared by every posed body of a template.
struct SurfaceSample {
  int bone = 1;        // child joint of the bone; attached to parent's frame
  double along = 0.5;  // fraction along the bone
  Vec3 direction = Vec3::UnitX();  // unit radial direction, parent rest frame
};
std::vector<SurfaceSample> surface_layout(const SkeletonTemplate& tmpl);

struct PosedBody {
  JointTable joints{};
  std::array<Mat3, kNumJoints> rotations{};  // global joint orientations
  std::vector<Vec3> surface_points;
  std::vector<Vec3> surface_normals;
  std::array<Vec3, kNumKeypoints> keypoints{};
};

PosedBody forward_kinematics(const SkeletonTemplate& tmpl, const BodyParams& params);

std::array<Vec3, kNumKeypoints> keypoints_from_body(const PosedBody& body,
                                                     const SkeletonTemplate& tmpl);

/// Forward kinematics plus everything needed to differentiate points that are
/// rigidly attached to a joint frame.
class Kinematics {
 public:
  Kinematics(const SkeletonTemplate& tmpl, const BodyParams& params,
             bool with_surface = true);

  const PosedBody& body() const { return body_; }
  const ShapedSkeleton& shaped() const { return shaped_; }
  int shape_dim() const { return shape_dim_; }
  int param_size() const { return kPoseDim + shape_dim_ + 3; }

  /// grad += J^T g for the global keypoint k, where g = dE/dpoint.
  void accumulate_keypoint(int keypoint, const Vec3& g, Eigen::Ref<Eigen::VectorXd> grad) const;
  /// grad += J^T g for surface sample s.
  void accumulate_surface(int sample, const Vec3& g, Eigen::Ref<Eigen::VectorXd> grad) const;

  /// Dense 3 x param_size Jacobians (tests and diagnostics).
  Eigen::MatrixXd keypoint_jacobian(int keypoint) const;
  Eigen::MatrixXd surface_jacobian(int sample) const;

 private:
  void accumulate_point(int frame, const Vec3& point, const std::vector<Vec3>* local_shape_dir,
                        const Vec3& g, Eigen::Ref<Eigen::VectorXd> grad) const;

  const SkeletonTemplate* tmpl_;
  int shape_dim_;
  ShapedSkeleton shaped_;
  PosedBody body_;
  std::vector<SurfaceSample> layout_;
  std::array<Mat3, kNumJoints> omega_{};            // columns: angular directions
  std::vector<JointTable> joint_shape_deriv_;       // [b][joint]
  std::vector<std::vector<Vec3>> sample_shape_dir_; // [sample][b], parent rest frame
};

}  // namespace pedfit
