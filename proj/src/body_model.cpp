#include "pedfit/body_model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace pedfit {
namespace {

constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2", "l_ankle",
    "r_ankle", "spine3", "l_foot", "r_foot", "neck", "l_collar", "r_collar", "head",
    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist", "l_hand",
    "r_hand"};

constexpr std::array<std::string_view, kNumKeypoints> kKeypointNames = {
    "head", "neck", "rsho", "relb", "rwri", "lsho", "lelb", "lwri", "rhip",
    "rknee", "rankl", "lhip", "lknee", "lankl", "reye", "leye", "rear", "lear"};

constexpr std::array<int, kNumJoints> kSmplParents = {
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

bool is_left(int j) {
  switch (j) {
    case kLHip: case kLKnee: case kLAnkle: case kLFoot: case kLCollar:
    case kLShoulder: case kLElbow: case kLWrist: case kLHand:
      return true;
    default:
      return false;
  }
}
bool is_right(int j) {
  switch (j) {
    case kRHip: case kRKnee: case kRAnkle: case kRFoot: case kRCollar:
    case kRShoulder: case kRElbow: case kRWrist: case kRHand:
      return true;
    default:
      return false;
  }
}
double side_sign(int j) { return is_left(j) ? 1.0 : (is_right(j) ? -1.0 : 0.0); }

bool is_descendant(const std::array<int, kNumJoints>& parent, int j, int ancestor) {
  for (int k = j; k >= 0; k = parent[k])
    if (k == ancestor) return true;
  return false;
}

// Orthonormal pair perpendicular to `axis`.
std::pair<Vec3, Vec3> perpendicular_basis(const Vec3& axis) {
  const Vec3 a = axis.normalized();
  const Vec3 helper = std::abs(a.y()) < 0.9 ? Vec3::UnitY() : Vec3::UnitX();
  const Vec3 u = helper.cross(a).normalized();
  return {u, a.cross(u)};
}

}  // namespace

std::string_view joint_name(int joint) { return kJointNames.at(joint); }
std::string_view keypoint_name(int keypoint) { return kKeypointNames.at(keypoint); }

int keypoint_index(std::string_view name) {
  for (int k = 0; k < kNumKeypoints; ++k)
    if (kKeypointNames[k] == name) return k;
  return -1;
}

void SkeletonTemplate::validate() const {
  int roots = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (parent[j] < 0) {
      ++roots;
      if (j != 0) throw std::invalid_argument("template: root must be joint 0");
    } else if (parent[j] >= j) {
      throw std::invalid_argument("template: parent of joint " + std::to_string(j) +
                                  " must precede it");
    }
  }
  if (roots != 1) throw std::invalid_argument("template: expected exactly one root");
  for (int j = 1; j < kNumJoints; ++j) {
    if ((joints[j] - joints[parent[j]]).norm() < 1e-6)
      throw std::invalid_argument("template: zero-length bone at joint " + std::to_string(j));
    if (!(bone_radius[j] > 0.0))
      throw std::invalid_argument("template: nonpositive radius at joint " + std::to_string(j));
  }
  if (radius_basis.size() != shape_basis.size())
    throw std::invalid_argument("template: radius basis count differs from shape basis count");
  for (const auto& kp : keypoints)
    if (kp.joint < 0 || kp.joint >= kNumJoints)
      throw std::invalid_argument("template: keypoint bound to invalid joint");
  if (samples_per_bone < 1) throw std::invalid_argument("template: samples_per_bone < 1");
  if (std::abs(forward_axis.norm() - 1.0) > 1e-9 || std::abs(forward_axis.y()) > 1e-9)
    throw std::invalid_argument("template: forward axis must be a horizontal unit vector");
}

SkeletonTemplate default_template(int shape_dim) {
  if (shape_dim < 0 || shape_dim > kDefaultShapeDim)
    throw DimensionError("default template supports 0..10 shape coefficients");

  SkeletonTemplate t;
  t.parent = kSmplParents;
  // Rest T-pose, meters; proportions of an average adult of ~1.70 m.
  t.joints = {Vec3(0.0, 0.0, 0.0),       Vec3(0.075, -0.085, 0.0),
              Vec3(-0.075, -0.085, 0.0), Vec3(0.0, 0.11, -0.02),
              Vec3(0.09, -0.48, 0.01),   Vec3(-0.09, -0.48, 0.01),
              Vec3(0.0, 0.245, -0.01),   Vec3(0.085, -0.88, -0.03),
              Vec3(-0.085, -0.88, -0.03), Vec3(0.0, 0.30, 0.015),
              Vec3(0.10, -0.94, 0.09),   Vec3(-0.10, -0.94, 0.09),
              Vec3(0.0, 0.51, -0.01),    Vec3(0.075, 0.42, 0.0),
              Vec3(-0.075, 0.42, 0.0),   Vec3(0.0, 0.585, 0.035),
              Vec3(0.175, 0.44, -0.015), Vec3(-0.175, 0.44, -0.015),
              Vec3(0.44, 0.43, -0.03),   Vec3(-0.44, 0.43, -0.03),
              Vec3(0.69, 0.435, -0.025), Vec3(-0.69, 0.435, -0.025),
              Vec3(0.77, 0.43, -0.03),   Vec3(-0.77, 0.43, -0.03)};

  auto& r = t.bone_radius;
  r[0] = 0.0;
  r[kLHip] = r[kRHip] = 0.10;
  r[kSpine1] = 0.13;
  r[kLKnee] = r[kRKnee] = 0.075;
  r[kSpine2] = 0.13;
  r[kLAnkle] = r[kRAnkle] = 0.052;
  r[kSpine3] = 0.13;
  r[kLFoot] = r[kRFoot] = 0.045;
  r[kNeck] = 0.07;
  r[kLCollar] = r[kRCollar] = 0.065;
  r[kHead] = 0.095;
  r[kLShoulder] = r[kRShoulder] = 0.06;
  r[kLElbow] = r[kRElbow] = 0.047;
  r[kLWrist] = r[kRWrist] = 0.038;
  r[kLHand] = r[kRHand] = 0.035;

  const auto& J = t.joints;
  const auto& P = t.parent;
  std::vector<JointTable> basis;
  std::vector<std::array<double, kNumJoints>> rbasis;
  auto zero_table = [] {
    JointTable z;
    z.fill(Vec3::Zero());
    return z;
  };
  auto zero_radii = [] {
    std::array<double, kNumJoints> z{};
    z.fill(0.0);
    return z;
  };

  {  // 0: stature, 4% uniform scale about the root
    JointTable b = zero_table();
    auto rb = zero_radii();
    for (int j = 0; j < kNumJoints; ++j) {
      b[j] = 0.04 * J[j];
      rb[j] = 0.04 * r[j];
    }
    basis.push_back(b);
    rbasis.push_back(rb);
  }
  {  // 1: leg length
    JointTable b = zero_table();
    for (int j = 0; j < kNumJoints; ++j) {
      for (int hip : {int(kLHip), int(kRHip)})
        if (j != hip && is_descendant(P, j, hip)) b[j] = 0.05 * (J[j] - J[hip]);
    }
    basis.push_back(b);
    rbasis.push_back(zero_radii());
  }
  {  // 2: arm length
    JointTable b = zero_table();
    for (int j = 0; j < kNumJoints; ++j) {
      for (int sh : {int(kLShoulder), int(kRShoulder)})
        if (j != sh && is_descendant(P, j, sh)) b[j] = 0.05 * (J[j] - J[sh]);
    }
    basis.push_back(b);
    rbasis.push_back(zero_radii());
  }
  {  // 3: shoulder width
    JointTable b = zero_table();
    for (int j = 0; j < kNumJoints; ++j) {
      if (is_descendant(P, j, kLCollar) || is_descendant(P, j, kRCollar)) {
        const double w = (j == kLCollar || j == kRCollar) ? 0.008 : 0.016;
        b[j] = Vec3(side_sign(j) * w, 0.0, 0.0);
      }
    }
    basis.push_back(b);
    rbasis.push_back(zero_radii());
  }
  {  // 4: hip width
    JointTable b = zero_table();
    for (int j = 0; j < kNumJoints; ++j)
      if (is_descendant(P, j, kLHip) || is_descendant(P, j, kRHip))
        b[j] = Vec3(side_sign(j) * 0.012, 0.0, 0.0);
    auto rb = zero_radii();
    rb[kLHip] = rb[kRHip] = 0.008;
    basis.push_back(b);
    rbasis.push_back(rb);
  }
  {  // 5: torso length
    JointTable b = zero_table();
    for (int j = 0; j < kNumJoints; ++j) {
      if (j == kSpine1) b[j] = Vec3(0.0, 0.006, 0.0);
      else if (j == kSpine2) b[j] = Vec3(0.0, 0.012, 0.0);
      else if (is_descendant(P, j, kSpine3)) b[j] = Vec3(0.0, 0.02, 0.0);
    }
    basis.push_back(b);
    rbasis.push_back(zero_radii());
  }
  {  // 6: torso girth
    auto rb = zero_radii();
    for (int j : {int(kSpine1), int(kSpine2), int(kSpine3), int(kLHip), int(kRHip)}) rb[j] = 0.015;
    for (int j : {int(kLCollar), int(kRCollar), int(kNeck)}) rb[j] = 0.006;
    basis.push_back(zero_table());
    rbasis.push_back(rb);
  }
  {  // 7: neck length
    JointTable b = zero_table();
    b[kNeck] = Vec3(0.0, 0.012, 0.0);
    b[kHead] = Vec3(0.0, 0.02, 0.0);
    basis.push_back(b);
    rbasis.push_back(zero_radii());
  }
  {  // 8: distal limb length (forearms and shins)
    JointTable b = zero_table();
    for (int j = 0; j < kNumJoints; ++j) {
      for (int root : {int(kLElbow), int(kRElbow), int(kLKnee), int(kRKnee)})
        if (j != root && is_descendant(P, j, root)) b[j] = 0.04 * (J[j] - J[root]);
    }
    basis.push_back(b);
    rbasis.push_back(zero_radii());
  }
  {  // 9: limb girth
    auto rb = zero_radii();
    for (int j = 0; j < kNumJoints; ++j)
      if (j != 0 && (is_left(j) || is_right(j)) && j != kLHip && j != kRHip &&
          j != kLCollar && j != kRCollar)
        rb[j] = 0.007;
    basis.push_back(zero_table());
    rbasis.push_back(rb);
  }
  basis.resize(shape_dim);
  rbasis.resize(shape_dim);
  t.shape_basis = std::move(basis);
  t.radius_basis = std::move(rbasis);

  auto bind = [&](int kp, int joint, Vec3 off = Vec3::Zero()) {
    t.keypoints[kp] = KeypointBinding{joint, off};
  };
  bind(kKpHead, kHead, Vec3(0.0, 0.09, 0.01));
  bind(kKpNeck, kNeck);
  bind(kKpRShoulder, kRShoulder);
  bind(kKpRElbow, kRElbow);
  bind(kKpRWrist, kRWrist);
  bind(kKpLShoulder, kLShoulder);
  bind(kKpLElbow, kLElbow);
  bind(kKpLWrist, kLWrist);
  bind(kKpRHip, kRHip);
  bind(kKpRKnee, kRKnee);
  bind(kKpRAnkle, kRAnkle);
  bind(kKpLHip, kLHip);
  bind(kKpLKnee, kLKnee);
  bind(kKpLAnkle, kLAnkle);
  bind(kKpREye, kHead, Vec3(-0.032, 0.11, 0.085));
  bind(kKpLEye, kHead, Vec3(0.032, 0.11, 0.085));
  bind(kKpREar, kHead, Vec3(-0.075, 0.09, 0.0));
  bind(kKpLEar, kHead, Vec3(0.075, 0.09, 0.0));

  t.forward_axis = Vec3::UnitZ();
  t.samples_per_bone = kDefaultSamplesPerBone;
  return t;
}

std::vector<int> joint_chain(const SkeletonTemplate& tmpl, int joint) {
  std::vector<int> chain;
  for (int k = joint; k >= 0; k = tmpl.parent[k]) chain.push_back(k);
  return chain;
}

ShapedSkeleton shape_skeleton(const SkeletonTemplate& tmpl, const Eigen::VectorXd& shape) {
  if (shape.size() != tmpl.shape_dim()) {
    std::ostringstream os;
    os << "shape has " << shape.size() << " coefficients, template expects "
       << tmpl.shape_dim();
    throw DimensionError(os.str());
  }
  ShapedSkeleton out;
  out.joints = tmpl.joints;
  out.bone_radius = tmpl.bone_radius;
  for (int b = 0; b < tmpl.shape_dim(); ++b) {
    const double c = shape[b];
    if (c == 0.0) continue;
    for (int j = 0; j < kNumJoints; ++j) {
      out.joints[j] += c * tmpl.shape_basis[b][j];
      out.bone_radius[j] += c * tmpl.radius_basis[b][j];
    }
  }
  for (int j = 0; j < kNumJoints; ++j) {
    out.radius_clamped[j] = out.bone_radius[j] < kMinBoneRadius;
    if (out.radius_clamped[j]) out.bone_radius[j] = kMinBoneRadius;
  }
  return out;
}

BodyParams BodyParams::zeros(int shape_dim) {
  BodyParams p;
  p.shape = Eigen::VectorXd::Zero(shape_dim);
  return p;
}

Eigen::VectorXd BodyParams::pack() const {
  Eigen::VectorXd x(size());
  x.head<kPoseDim>() = pose;
  x.segment(kPoseDim, shape.size()) = shape;
  x.tail<3>() = translation;
  return x;
}

BodyParams BodyParams::unpack(const Eigen::VectorXd& x, int shape_dim) {
  if (x.size() != kPoseDim + shape_dim + 3)
    throw DimensionError("packed parameter vector has wrong length");
  BodyParams p;
  p.pose = x.head<kPoseDim>();
  p.shape = x.segment(kPoseDim, shape_dim);
  p.translation = x.tail<3>();
  return p;
}

bool BodyParams::all_finite() const {
  return pose.allFinite() && shape.allFinite() && translation.allFinite();
}

std::vector<SurfaceSample> surface_layout(const SkeletonTemplate& tmpl) {
  constexpr double kGoldenAngle = std::numbers::pi * (3.0 - 2.23606797749978969641);
  std::vector<SurfaceSample> out;
  out.reserve(tmpl.surface_size());
  const int n = tmpl.samples_per_bone;
  for (int bone = 1; bone < kNumJoints; ++bone) {
    const Vec3 axis = tmpl.joints[bone] - tmpl.joints[tmpl.parent[bone]];
    const auto [u, v] = perpendicular_basis(axis);
    for (int k = 0; k < n; ++k) {
      const double phi = kGoldenAngle * k;
      out.push_back(SurfaceSample{bone, (k + 0.5) / n, std::cos(phi) * u + std::sin(phi) * v});
    }
  }
  return out;
}

namespace {

struct GlobalFrames {
  std::array<Mat3, kNumJoints> rot;
  JointTable pos;
};

GlobalFrames compose(const SkeletonTemplate& tmpl, const ShapedSkeleton& shaped,
                     const BodyParams& params) {
  GlobalFrames g;
  g.rot[0] = axis_angle_to_matrix(params.joint_rotation(0));
  g.pos[0] = shaped.joints[0] + params.translation;
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = tmpl.parent[j];
    g.rot[j] = g.rot[p] * axis_angle_to_matrix(params.joint_rotation(j));
    g.pos[j] = g.pos[p] + g.rot[p] * (shaped.joints[j] - shaped.joints[p]);
  }
  return g;
}

Vec3 sample_local(const ShapedSkeleton& shaped, const SkeletonTemplate& tmpl,
                  const SurfaceSample& s) {
  const int p = tmpl.parent[s.bone];
  return s.along * (shaped.joints[s.bone] - shaped.joints[p]) +
         shaped.bone_radius[s.bone] * s.direction;
}

void fill_body(const SkeletonTemplate& tmpl, const ShapedSkeleton& shaped, const GlobalFrames& g,
               const std::vector<SurfaceSample>* layout, PosedBody& body) {
  body.joints = g.pos;
  body.rotations = g.rot;
  if (layout) {
    body.surface_points.resize(layout->size());
    body.surface_normals.resize(layout->size());
    for (size_t i = 0; i < layout->size(); ++i) {
      const auto& s = (*layout)[i];
      const int p = tmpl.parent[s.bone];
      body.surface_points[i] = g.pos[p] + g.rot[p] * sample_local(shaped, tmpl, s);
      body.surface_normals[i] = g.rot[p] * s.direction;
    }
  }
  body.keypoints = keypoints_from_body(body, tmpl);
}

}  // namespace

PosedBody forward_kinematics(const SkeletonTemplate& tmpl, const BodyParams& params) {
  const ShapedSkeleton shaped = shape_skeleton(tmpl, params.shape);
  const GlobalFrames g = compose(tmpl, shaped, params);
  const auto layout = surface_layout(tmpl);
  PosedBody body;
  fill_body(tmpl, shaped, g, &layout, body);
  return body;
}

std::array<Vec3, kNumKeypoints> keypoints_from_body(const PosedBody& body,
                                                     const SkeletonTemplate& tmpl) {
  std::array<Vec3, kNumKeypoints> out;
  for (int k = 0; k < kNumKeypoints; ++k) {
    const auto& b = tmpl.keypoints[k];
    out[k] = body.joints[b.joint] + body.rotations[b.joint] * b.offset;
  }
  return out;
}

Kinematics::Kinematics(const SkeletonTemplate& tmpl, const BodyParams& params, bool with_surface)
    : tmpl_(&tmpl), shape_dim_(tmpl.shape_dim()) {
  shaped_ = shape_skeleton(tmpl, params.shape);
  const GlobalFrames g = compose(tmpl, shaped_, params);
  if (with_surface) layout_ = surface_layout(tmpl);
  fill_body(tmpl, shaped_, g, with_surface ? &layout_ : nullptr, body_);

  for (int j = 0; j < kNumJoints; ++j) {
    const int p = tmpl.parent[j];
    const Mat3 parent_rot = p < 0 ? Mat3::Identity() : g.rot[p];
    omega_[j] = parent_rot * so3_left_jacobian(params.joint_rotation(j));
  }

  joint_shape_deriv_.assign(shape_dim_, JointTable{});
  for (int b = 0; b < shape_dim_; ++b) {
    const auto& S = tmpl.shape_basis[b];
    auto& d = joint_shape_deriv_[b];
    d[0] = S[0];
    for (int j = 1; j < kNumJoints; ++j) {
      const int p = tmpl.parent[j];
      d[j] = d[p] + g.rot[p] * (S[j] - S[p]);
    }
  }

  if (with_surface) {
    sample_shape_dir_.resize(layout_.size());
    for (size_t i = 0; i < layout_.size(); ++i) {
      const auto& s = layout_[i];
      const int p = tmpl.parent[s.bone];
      auto& dirs = sample_shape_dir_[i];
      dirs.resize(shape_dim_);
      for (int b = 0; b < shape_dim_; ++b) {
        const double dr = shaped_.radius_clamped[s.bone] ? 0.0 : tmpl.radius_basis[b][s.bone];
        dirs[b] = s.along * (tmpl.shape_basis[b][s.bone] - tmpl.shape_basis[b][p]) +
                  dr * s.direction;
      }
    }
  }
}

void Kinematics::accumulate_point(int frame, const Vec3& point,
                                  const std::vector<Vec3>* local_shape_dir, const Vec3& g,
                                  Eigen::Ref<Eigen::VectorXd> grad) const {
  const auto& parent = tmpl_->parent;
  for (int m = frame; m >= 0; m = parent[m]) {
    const Vec3 c = (point - body_.joints[m]).cross(g);
    grad.segment<3>(3 * m) += omega_[m].transpose() * c;
  }
  for (int b = 0; b < shape_dim_; ++b) {
    Vec3 d = joint_shape_deriv_[b][frame];
    if (local_shape_dir) d += body_.rotations[frame] * (*local_shape_dir)[b];
    grad[kPoseDim + b] += g.dot(d);
  }
  grad.segment<3>(kPoseDim + shape_dim_) += g;
}

void Kinematics::accumulate_keypoint(int keypoint, const Vec3& g,
                                     Eigen::Ref<Eigen::VectorXd> grad) const {
  accumulate_point(tmpl_->keypoints[keypoint].joint, body_.keypoints[keypoint], nullptr, g, grad);
}

void Kinematics::accumulate_surface(int sample, const Vec3& g,
                                    Eigen::Ref<Eigen::VectorXd> grad) const {
  const int frame = tmpl_->parent[layout_[sample].bone];
  accumulate_point(frame, body_.surface_points[sample], &sample_shape_dir_[sample], g, grad);
}

Eigen::MatrixXd Kinematics::keypoint_jacobian(int keypoint) const {
  Eigen::MatrixXd J(3, param_size());
  for (int r = 0; r < 3; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(param_size());
    accumulate_keypoint(keypoint, Vec3::Unit(r), row);
    J.row(r) = row.transpose();
  }
  return J;
}

Eigen::MatrixXd Kinematics::surface_jacobian(int sample) const {
  Eigen::MatrixXd J(3, param_size());
  for (int r = 0; r < 3; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(param_size());
    accumulate_surface(sample, Vec3::Unit(r), row);
    J.row(r) = row.transpose();
  }
  return J;
}

}  // namespace pedfit
