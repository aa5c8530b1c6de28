#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedfit/body_model.hpp"
#include "pedfit/energies.hpp"
#include "pedfit/kernels.hpp"
#include "pedfit/stereo.hpp"

namespace pedfit {

struct WalkSequence {
  std::vector<BodyParams> params;
  std::vector<double> timestamps;
};

/// Root height that puts the lowest capsule of the rest pose on the ground.
double standing_root_height(const SkeletonTemplate& tmpl, const Eigen::VectorXd& shape);

struct WalkStyle {
  double shape_sigma = 0.5;        // per-coefficient std of the random shape
  double frame_interval = 0.1;     // s
  double perturbation = 0.05;      // rad, smooth per-joint wobble amplitude
};

/// Sinusoidal walking cycle. Root position at frame k is
/// start + speed * heading * t_k (heading projected to the ground plane); the
/// gait phase, cadence, swing amplitudes, shape and a smooth per-joint wobble
/// vary with the seed. Bit-identical for identical arguments.
WalkSequence gen_walk_sequence(const SkeletonTemplate& tmpl, int n_frames, double speed,
                               const Vec3& heading, const Vec3& start, std::uint64_t seed,
                               const WalkStyle& style = {});

struct OcclusionSpec {
  /// Keypoints flagged occluded in both images (e.g. legs hidden by a car).
  std::vector<int> both;
  /// Independent per-image probability of flagging any other keypoint.
  double random_fraction = 0.0;

  static OcclusionSpec none() { return {}; }
  static OcclusionSpec legs();  // knees and ankles
  /// Named presets: "none", "legs", "random" (20% per image), "legs+random".
  static OcclusionSpec preset(const std::string& name);
};

struct RenderOptions {
  double noise_px = 0.0;
  OcclusionSpec occlusion;
  std::uint64_t seed = 0;
};

/// Stereo 2D keypoints with Gaussian noise (occluded ones get 3x the noise),
/// plus convex-hull masks of the projected surface. Keypoints outside the
/// image are marked absent. Throws GeometryError if any keypoint is behind
/// either camera.
FrameObservation render_observation(const BodyParams& params, const SkeletonTemplate& tmpl,
                                    const StereoRig& rig, const RenderOptions& options);

struct LidarOptions {
  double azimuth_step_deg = 0.1;
  double elevation_step_deg = 0.3;
  double dropout = 0.0;                 // Bernoulli drop probability per return
  double min_height = -1e9;             // returns below this global y are blocked
  std::uint64_t seed = 0;
};

/// Capsules of the posed body (one per bone).
std::vector<kernels::Capsule> body_capsules(const SkeletonTemplate& tmpl, const BodyParams& params);

/// Ray casts an azimuth/elevation grid, aligned to multiples of the step
/// sizes, from `sensor` against the body capsules and keeps first hits.
LabeledCloud simulate_lidar(const BodyParams& params, const SkeletonTemplate& tmpl,
                            const Vec3& sensor, const LidarOptions& options);

/// Scene description used by the synth command and the acceptance suite.
struct SceneSpec {
  int n_frames = 5;
  double frame_interval = 0.1;   // s
  double distance = 20.0;        // m from the left camera along its axis
  double lateral = 0.0;          // m, start offset along global x
  double speed = 1.4;            // m/s
  double heading_deg = 90.0;     // yaw of the walking direction; 0 = away from cameras
  double noise_px = 0.0;
  std::string occlusion = "none";
  double lidar_dropout = 0.0;
  double lidar_azimuth_step_deg = 0.1;
  double lidar_elevation_step_deg = 0.3;
  double lidar_min_height = -1e9;
  double disparity_noise_px = 1.0;
  double shape_sigma = 0.5;
  int track_id = 1;

  void validate() const;  // throws std::invalid_argument
};

struct Scene {
  WalkSequence truth;
  std::vector<FrameObservation> frames;
  /// Per frame and keypoint: true left-right disparity plus noise, px.
  std::vector<std::array<double, kNumKeypoints>> disparity;
};

Scene make_scene(const SkeletonTemplate& tmpl, const StereoRig& rig, const SceneSpec& spec,
                 std::uint64_t seed);

/// Walking motion corpus for prior training: random speeds and headings.
std::vector<WalkSequence> walk_corpus(const SkeletonTemplate& tmpl, int n_sequences,
                                      int frames_per_sequence, double frame_interval,
                                      std::uint64_t seed);

}  // namespace pedfit
