#include "pedfit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pedfit {

namespace {

constexpr double kPi = std::numbers::pi;

// Decorrelates derived seeds (frame k of scene s, etc.).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Vec3 compose_aa(const Mat3& r) { return matrix_to_axis_angle(r); }

Mat3 rot_x(double a) { return axis_angle_to_matrix(Vec3(a, 0.0, 0.0)); }
Mat3 rot_y(double a) { return axis_angle_to_matrix(Vec3(0.0, a, 0.0)); }
Mat3 rot_z(double a) { return axis_angle_to_matrix(Vec3(0.0, 0.0, a)); }

std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> h(2 * pts.size());
  size_t k = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i - 1]) <= 0) --k;
    h[k++] = pts[i - 1];
  }
  h.resize(k - 1);
  return h;
}

}  // namespace

double standing_root_height(const SkeletonTemplate& tmpl, const Eigen::VectorXd& shape) {
  const ShapedSkeleton s = shape_skeleton(tmpl, shape);
  double lowest = 0.0;
  for (int i = 1; i < kNumJoints; ++i) {
    const double y = std::min(s.joints[i].y(), s.joints[tmpl.parent[i]].y()) - s.bone_radius[i];
    lowest = std::min(lowest, y);
  }
  return -lowest;
}

WalkSequence gen_walk_sequence(const SkeletonTemplate& tmpl, int n_frames, double speed,
                               const Vec3& heading, const Vec3& start, std::uint64_t seed,
                               const WalkStyle& style) {
  if (n_frames < 0) throw std::invalid_argument("n_frames must be nonnegative");
  if (!(speed >= 0.0)) throw std::invalid_argument("walking speed must be nonnegative");
  if (!(style.frame_interval > 0.0)) throw std::invalid_argument("frame interval must be positive");
  Vec3 dir(heading.x(), 0.0, heading.z());
  if (dir.norm() < 1e-12) {
    if (speed > 0.0) throw std::invalid_argument("walking heading has no horizontal component");
    dir = tmpl.forward_axis;
  }
  dir.normalize();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);

  Eigen::VectorXd shape(tmpl.shape_dim());
  for (int b = 0; b < shape.size(); ++b) shape[b] = style.shape_sigma * normal(rng);
  const double cadence = 0.9 + 0.15 * unit(rng);  // stride cycles per second
  const double phase0 = angle(rng);
  const double hip_amp = 0.35 + 0.08 * unit(rng);
  const double knee_base = 0.15 + 0.05 * unit(rng);
  const double knee_amp = 0.55 + 0.1 * unit(rng);
  const double knee_lag = 0.5 * kPi + 0.2 * unit(rng);
  const double ankle_amp = 0.12 + 0.05 * unit(rng);
  const double arm_amp = 0.3 + 0.1 * unit(rng);
  const double arm_down = (70.0 + 5.0 * unit(rng)) * kPi / 180.0;
  const double elbow_base = 0.3 + 0.1 * unit(rng);
  const double elbow_amp = 0.15 + 0.05 * unit(rng);
  const double lean = 0.05 + 0.03 * unit(rng);
  const double twist = 0.08 + 0.03 * unit(rng);

  struct Wobble {
    double amp, freq, phase;
  };
  std::vector<Wobble> wobble(kPoseDim);
  for (int i = 0; i < kPoseDim; ++i) {
    const double a = style.perturbation * normal(rng) * (i < 3 ? 0.3 : 1.0);
    const double f = 0.2 + 1.3 * (0.5 + 0.5 * unit(rng));
    wobble[i] = {a, f, angle(rng)};
  }

  const double yaw = yaw_between(tmpl.forward_axis, dir);
  WalkSequence seq;
  for (int k = 0; k < n_frames; ++k) {
    const double t = k * style.frame_interval;
    const double psi = 2.0 * kPi * cadence * t + phase0;
    const double s = std::sin(psi);
    BodyParams p = BodyParams::zeros(tmpl.shape_dim());
    p.shape = shape;

    p.set_joint_rotation(0, compose_aa(rot_y(yaw + twist * s)));
    // legs: negative x-rotation swings a leg forward
    p.set_joint_rotation(kLHip, Vec3(-hip_amp * s, 0.0, 0.0));
    p.set_joint_rotation(kRHip, Vec3(hip_amp * s, 0.0, 0.0));
    p.set_joint_rotation(kLKnee,
                         Vec3(knee_base + knee_amp * (0.5 + 0.5 * std::sin(psi + knee_lag)), 0, 0));
    p.set_joint_rotation(kRKnee, Vec3(knee_base + knee_amp *
                                                      (0.5 + 0.5 * std::sin(psi + kPi + knee_lag)),
                                      0, 0));
    p.set_joint_rotation(kLAnkle, Vec3(ankle_amp * std::sin(psi + 0.3), 0.0, 0.0));
    p.set_joint_rotation(kRAnkle, Vec3(ankle_amp * std::sin(psi + kPi + 0.3), 0.0, 0.0));
    // torso: forward lean, counter-twist of the upper body
    p.set_joint_rotation(kSpine1, Vec3(lean, 0.0, 0.0));
    p.set_joint_rotation(kSpine3, Vec3(0.0, -0.7 * twist * s, 0.0));
    // arms hang down and swing against the legs
    p.set_joint_rotation(kLShoulder, compose_aa(rot_x(arm_amp * s) * rot_z(-arm_down)));
    p.set_joint_rotation(kRShoulder, compose_aa(rot_x(-arm_amp * s) * rot_z(arm_down)));
    p.set_joint_rotation(kLElbow,
                         Vec3(0.0, -(elbow_base + elbow_amp * (0.5 + 0.5 * s)), 0.0));
    p.set_joint_rotation(kRElbow,
                         Vec3(0.0, elbow_base + elbow_amp * (0.5 - 0.5 * s), 0.0));

    for (int i = 0; i < kPoseDim; ++i)
      p.pose[i] += wobble[i].amp * std::sin(2.0 * kPi * wobble[i].freq * t + wobble[i].phase);

    p.translation = start + speed * t * dir;
    seq.params.push_back(p);
    seq.timestamps.push_back(t);
  }
  return seq;
}

OcclusionSpec OcclusionSpec::legs() {
  OcclusionSpec s;
  s.both = {kKpRKnee, kKpRAnkle, kKpLKnee, kKpLAnkle};
  return s;
}

OcclusionSpec OcclusionSpec::preset(const std::string& name) {
  if (name == "none") return none();
  if (name == "legs") return legs();
  OcclusionSpec s;
  if (name == "random") {
    s.random_fraction = 0.2;
    return s;
  }
  if (name == "legs+random") {
    s = legs();
    s.random_fraction = 0.2;
    return s;
  }
  throw std::invalid_argument("unknown occlusion preset '" + name + "'");
}

FrameObservation render_observation(const BodyParams& params, const SkeletonTemplate& tmpl,
                                    const StereoRig& rig, const RenderOptions& opt) {
  if (!(opt.noise_px >= 0.0)) throw std::invalid_argument("noise_px must be nonnegative");
  const PosedBody body = forward_kinematics(tmpl, params);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::array<bool, kNumKeypoints> both{};
  both.fill(false);
  for (int k : opt.occlusion.both) {
    if (k < 0 || k >= kNumKeypoints) throw std::invalid_argument("occlusion keypoint out of range");
    both[k] = true;
  }

  FrameObservation obs;
  for (Side side : {Side::kLeft, Side::kRight}) {
    ImageKeypoints& kp = side == Side::kLeft ? obs.left : obs.right;
    for (int k = 0; k < kNumKeypoints; ++k) {
      const Projection pr = project(rig, body.keypoints[k], side);
      if (!pr.in_front)
        throw GeometryError(std::string("keypoint ") + std::string(keypoint_name(k)) +
                            " is behind the camera");
      const bool occluded = unit(rng) < opt.occlusion.random_fraction || both[k];
      const double sigma = (occluded ? 3.0 : 1.0) * opt.noise_px;
      const double nx = normal(rng);
      const double ny = normal(rng);
      kp.pixels[k] = pr.pixel + sigma * Eigen::Vector2d(nx, ny);
      kp.occlusion[k] = occluded ? Occlusion::kOccluded : Occlusion::kVisible;
      if (!rig.in_image(kp.pixels[k])) kp.occlusion[k] = Occlusion::kAbsent;
    }
    std::vector<Eigen::Vector2d> pts;
    for (const Vec3& p : body.surface_points) {
      const Projection pr = project(rig, p, side);
      if (pr.in_front) pts.push_back(pr.pixel);
    }
    for (const Vec3& p : body.keypoints) pts.push_back(project(rig, p, side).pixel);
    (side == Side::kLeft ? obs.mask_left : obs.mask_right) = convex_hull(std::move(pts));
  }
  return obs;
}

std::vector<kernels::Capsule> body_capsules(const SkeletonTemplate& tmpl,
                                            const BodyParams& params) {
  const PosedBody body = forward_kinematics(tmpl, params);
  const ShapedSkeleton shaped = shape_skeleton(tmpl, params.shape);
  std::vector<kernels::Capsule> caps;
  caps.reserve(kNumBones);
  for (int i = 1; i < kNumJoints; ++i)
    caps.push_back({body.joints[tmpl.parent[i]], body.joints[i], shaped.bone_radius[i]});
  return caps;
}

LabeledCloud simulate_lidar(const BodyParams& params, const SkeletonTemplate& tmpl,
                            const Vec3& sensor, const LidarOptions& opt) {
  if (!(opt.azimuth_step_deg > 0.0) || !(opt.elevation_step_deg > 0.0))
    throw std::invalid_argument("lidar angular resolution must be positive");
  const std::vector<kernels::Capsule> caps = body_capsules(tmpl, params);

  // angular window covering every capsule (no wrap-around at azimuth +-pi)
  double az_lo = 1e9, az_hi = -1e9, el_lo = 1e9, el_hi = -1e9;
  for (const auto& c : caps) {
    for (const Vec3& e : {c.a, c.b}) {
      const Vec3 d = e - sensor;
      const double horiz = std::hypot(d.x(), d.z());
      const double dist = d.norm();
      const double margin = dist > c.radius ? std::asin(c.radius / dist) : kPi / 2;
      const double az = std::atan2(d.x(), d.z());
      const double el = std::atan2(d.y(), horiz);
      az_lo = std::min(az_lo, az - margin);
      az_hi = std::max(az_hi, az + margin);
      el_lo = std::min(el_lo, el - margin);
      el_hi = std::max(el_hi, el + margin);
    }
  }
  const double daz = opt.azimuth_step_deg * kPi / 180.0;
  const double del = opt.elevation_step_deg * kPi / 180.0;
  std::vector<Vec3> dirs;
  for (long i = static_cast<long>(std::ceil(el_lo / del)); i * del <= el_hi; ++i) {
    const double el = i * del;
    for (long j = static_cast<long>(std::ceil(az_lo / daz)); j * daz <= az_hi; ++j) {
      const double az = j * daz;
      dirs.emplace_back(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    }
  }
  const std::vector<double> hits = kernels::cast_rays(sensor, dirs, caps);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabeledCloud cloud;
  for (size_t r = 0; r < dirs.size(); ++r) {
    const bool drop = unit(rng) < opt.dropout;  // one draw per ray keeps streams aligned
    if (hits[r] <= 0.0 || drop) continue;
    const Vec3 p = sensor + hits[r] * dirs[r];
    if (p.y() < opt.min_height) continue;
    cloud.points.push_back(p);
  }
  return cloud;
}

void SceneSpec::validate() const {
  if (n_frames < 1) throw std::invalid_argument("scene.n_frames must be >= 1");
  if (!(frame_interval > 0.0)) throw std::invalid_argument("scene.frame_interval must be > 0");
  if (!(distance > 0.0)) throw std::invalid_argument("scene.distance must be > 0");
  if (!(speed >= 0.0)) throw std::invalid_argument("scene.speed must be >= 0");
  if (!(noise_px >= 0.0)) throw std::invalid_argument("scene.noise_px must be >= 0");
  if (!(lidar_dropout >= 0.0 && lidar_dropout <= 1.0))
    throw std::invalid_argument("scene.lidar_dropout must be in [0, 1]");
  if (!(disparity_noise_px >= 0.0))
    throw std::invalid_argument("scene.disparity_noise_px must be >= 0");
  OcclusionSpec::preset(occlusion);
}

Scene make_scene(const SkeletonTemplate& tmpl, const StereoRig& rig, const SceneSpec& spec,
                 std::uint64_t seed) {
  spec.validate();
  const Vec3 dir = yaw_rotation(spec.heading_deg * kPi / 180.0) * Vec3::UnitZ();
  const double duration = (spec.n_frames - 1) * spec.frame_interval;
  const Vec3 cam = rig.cam_to_global.translation;
  const Vec3 center(cam.x() + spec.lateral, 0.0, cam.z() + spec.distance);
  const Vec3 start = center - 0.5 * spec.speed * duration * dir;

  WalkStyle style;
  style.frame_interval = spec.frame_interval;
  style.shape_sigma = spec.shape_sigma;
  Scene scene;
  scene.truth = gen_walk_sequence(tmpl, spec.n_frames, spec.speed, dir, start,
                                  mix_seed(seed, 1), style);
  const double h = standing_root_height(tmpl, scene.truth.params.front().shape);
  for (auto& p : scene.truth.params) p.translation.y() += h;

  RenderOptions ro;
  ro.noise_px = spec.noise_px;
  ro.occlusion = OcclusionSpec::preset(spec.occlusion);
  LidarOptions lo;
  lo.azimuth_step_deg = spec.lidar_azimuth_step_deg;
  lo.elevation_step_deg = spec.lidar_elevation_step_deg;
  lo.dropout = spec.lidar_dropout;
  lo.min_height = spec.lidar_min_height;
  const Vec3 sensor = rig.lidar_origin_global();

  std::mt19937_64 disp_rng(mix_seed(seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < spec.n_frames; ++k) {
    const BodyParams& p = scene.truth.params[k];
    ro.seed = mix_seed(seed, 1000 + k);
    FrameObservation obs = render_observation(p, tmpl, rig, ro);
    obs.frame_id = k;
    obs.track_id = spec.track_id;
    obs.timestamp = scene.truth.timestamps[k];
    lo.seed = mix_seed(seed, 2000 + k);
    obs.cloud = simulate_lidar(p, tmpl, sensor, lo);
    obs.cloud.instance_id = spec.track_id;
    obs.cloud.timestamp = obs.timestamp;

    const PosedBody body = forward_kinematics(tmpl, p);
    std::array<double, kNumKeypoints> disp{};
    for (int j = 0; j < kNumKeypoints; ++j) {
      const double d = project(rig, body.keypoints[j], Side::kLeft).pixel.x() -
                       project(rig, body.keypoints[j], Side::kRight).pixel.x();
      disp[j] = d + spec.disparity_noise_px * normal(disp_rng);
    }
    scene.disparity.push_back(disp);
    scene.frames.push_back(std::move(obs));
  }
  return scene;
}

std::vector<WalkSequence> walk_corpus(const SkeletonTemplate& tmpl, int n_sequences,
                                      int frames_per_sequence, double frame_interval,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> speed(0.6, 1.9);
  std::uniform_real_distribution<double> yaw(0.0, 2.0 * kPi);
  WalkStyle style;
  style.frame_interval = frame_interval;
  std::vector<WalkSequence> out;
  for (int i = 0; i < n_sequences; ++i) {
    const double v = speed(rng);
    const Vec3 dir = yaw_rotation(yaw(rng)) * Vec3::UnitZ();
    out.push_back(gen_walk_sequence(tmpl, frames_per_sequence, v, dir, Vec3::Zero(),
                                    mix_seed(seed, 10 + i), style));
  }
  return out;
}

}  // namespace pedfit
