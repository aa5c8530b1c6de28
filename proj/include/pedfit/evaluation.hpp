#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pedfit/solver.hpp"

namespace pedfit {

/// Evaluation joints in the column order of the result tables.
inline constexpr int kNumEvalJoints = 13;
enum EvalJoint : int {
  kEvRKnee = 0, kEvLKnee, kEvRAnkle, kEvLAnkle, kEvRShoulder, kEvLShoulder, kEvRElbow,
  kEvLElbow, kEvRWrist, kEvLWrist, kEvHead, kEvNeck, kEvHip
};
std::string_view eval_joint_name(int joint);

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct JointSeries {
  std::vector<int> frame_ids;
  std::vector<std::array<Vec3, kNumEvalJoints>> positions;  // meters, global
  std::vector<std::array<bool, kNumEvalJoints>> valid;

  int frames() const { return static_cast<int>(frame_ids.size()); }
  void add_frame(int frame_id);  // appends an all-invalid frame
  void validate() const;         // throws EvalError
};

/// Maps 18 annotation keypoints to the evaluation joints; the hip is the
/// midpoint of both hip keypoints and needs both to be valid.
void set_from_keypoints(JointSeries& series, int frame, const std::array<Vec3, kNumKeypoints>& kp,
                        const std::array<bool, kNumKeypoints>& kp_valid);

/// All joints valid.
JointSeries series_from_params(const std::vector<BodyParams>& params,
                               const std::vector<int>& frame_ids, const SkeletonTemplate& tmpl);

struct Mpjpe {
  std::array<double, kNumEvalJoints> sum_mm{};  // summed distances
  std::array<int, kNumEvalJoints> count{};
  int skipped_frames = 0;

  double joint_mm(int j) const;  // NaN when the joint was never counted
  /// Count-weighted mean over joints, which equals the mean over all pairs.
  double mean_mm() const;
  int total_count() const;
  void merge(const Mpjpe& other);
};

/// Frames are matched by frame id; pred frames absent from gt are ignored.
/// Throws EvalError when no (frame, joint) pair is valid in both.
Mpjpe mpjpe_global(const JointSeries& pred, const JointSeries& gt);

/// Per-frame similarity registration (rotation, translation, isotropic scale,
/// no reflection) of pred onto gt before measuring. Frames with fewer than
/// three mutually valid joints are skipped and counted in skipped_frames.
Mpjpe mpjpe_relative(const JointSeries& pred, const JointSeries& gt);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

/// Least-squares similarity mapping `src` onto `dst` with det(R) = +1.
Similarity fit_similarity(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

/// Per frame and keypoint disparity, px.
using DisparityTable = std::vector<std::array<double, kNumKeypoints>>;

/// Triangulates every keypoint visible in both images.
JointSeries baseline_triangulation(const std::vector<FrameObservation>& frames,
                                   const StereoRig& rig);

/// Left pixels back-projected at the supplied disparity for joints visible in
/// the left image; triangulation entries elsewhere.
JointSeries baseline_left_disp(const std::vector<FrameObservation>& frames, const StereoRig& rig,
                               const DisparityTable& disparity);

/// Mean disparity over keypoints visible in the left image; 0 if there are none.
double mean_visible_disparity(const FrameObservation& obs,
                              const std::array<double, kNumKeypoints>& disparity);

/// Monocular fit (left reprojection and pose prior only, four yaw restarts),
/// then a scaling about the left camera centre that puts the mean depth of the
/// visible keypoints at focal * baseline / mean disparity.
JointSeries baseline_monofit_disp(const std::vector<FrameObservation>& frames,
                                  const StereoRig& rig, const SkeletonTemplate& tmpl,
                                  const Priors& priors, const EnergyWeights& weights,
                                  const DisparityTable& disparity);

/// One row of the energy-term ablation.
struct AblationRow {
  int index = 0;
  bool joints_left = true;
  bool joints_right = true;
  bool translation = true;
  bool lidar = true;
  bool temporal = true;

  TermMask mask() const;  // throws std::invalid_argument when no data term is on
};

/// Rows 1-6 of the ablation table.
std::vector<AblationRow> standard_ablation_rows();

struct AblationInput {
  std::vector<FrameObservation> frames;
  JointSeries truth;
};

struct AblationResult {
  AblationRow row;
  Mpjpe relative;
  Mpjpe global;
  std::vector<double> scene_global_mm;  // per input sequence
};

std::vector<AblationResult> run_ablation(const std::vector<AblationInput>& inputs,
                                         const StereoRig& rig, const SkeletonTemplate& tmpl,
                                         const Priors& priors, const EnergyWeights& weights,
                                         const std::vector<AblationRow>& rows,
                                         const AdmmConfig& admm = {},
                                         const FitOptions& options = {});

}  // namespace pedfit
