#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pedfit/body_model.hpp"
#include "pedfit/pointcloud.hpp"
#include "pedfit/priors.hpp"
#include "pedfit/stereo.hpp"

namespace pedfit {

/// Annotated degree of occlusion of a 2D keypoint.
enum class Occlusion : int {
  kVisible = 0,   // clearly visible
  kOccluded = 1,  // hidden, annotator's guess
  kAbsent = 2     // not labeled
};

double occlusion_weight(Occlusion o);

struct ImageKeypoints {
  std::array<Eigen::Vector2d, kNumKeypoints> pixels{};
  std::array<Occlusion, kNumKeypoints> occlusion{};

  ImageKeypoints() {
    pixels.fill(Eigen::Vector2d::Zero());
    occlusion.fill(Occlusion::kAbsent);
  }
  bool visible(int k) const { return occlusion[k] == Occlusion::kVisible; }
};

struct FrameObservation {
  int frame_id = 0;
  int track_id = 0;
  double timestamp = 0.0;
  ImageKeypoints left;
  ImageKeypoints right;
  Polygon mask_left;
  Polygon mask_right;
  LabeledCloud cloud;
  std::optional<Vec3> heading;  // unit, horizontal

  const ImageKeypoints& keypoints(Side side) const {
    return side == Side::kLeft ? left : right;
  }
};

struct EnergyWeights {
  // Overall scale is kept small so the per-frame shape curvature stays
  // comparable to the ADMM penalty; only the ratios matter for a single frame.
  double joints = 0.01;
  double lidar = 300.0;
  double pose_prior = 0.01;
  double translation = 1.0;
  double heading = 0.1;
  double temporal = 0.01;
  double gm_sigma = 100.0;  // px
  bool heading_init_only = false;

  void validate() const;  // throws std::invalid_argument
};

/// Which terms participate (ablation rows switch these).
struct TermMask {
  bool joints_left = true;
  bool joints_right = true;
  bool translation = true;
  bool lidar = true;
  bool temporal = true;
  bool pose_prior = true;
  bool heading = true;

  bool any_data_term() const {
    return joints_left || joints_right || translation || lidar || temporal;
  }
};

struct EnergyTerms {
  double joints_left = 0.0;
  double joints_right = 0.0;
  double lidar = 0.0;
  double pose_prior = 0.0;
  double translation = 0.0;
  double heading = 0.0;
  double temporal = 0.0;
  double shape_anchor = 0.0;  // ADMM augmented quadratic
  double total = 0.0;
};

/// Geman-McClure: r^2 sigma^2 / (sigma^2 + r^2), written in terms of r^2.
double geman_mcclure(double r2, double sigma);

// Individual terms. Each returns the unweighted value and, when `grad` is
// non-null, adds its gradient w.r.t. the packed BodyParams vector.

double e_reproj(const Kinematics& kin, const ImageKeypoints& obs, const StereoRig& rig, Side side,
                double gm_sigma, Eigen::VectorXd* grad,
                const std::array<bool, kNumKeypoints>* subset = nullptr);

double e_translation(const BodyParams& params, const Vec3& t0, Eigen::VectorXd* grad);

/// Unit forward direction of the body's root orientation.
Vec3 body_forward(const BodyParams& params, const Vec3& forward_axis);
double e_heading(const BodyParams& params, const Vec3& heading, const Vec3& forward_axis,
                 Eigen::VectorXd* grad);

/// Nearest sensor-facing surface sample per LiDAR point.
std::vector<int> lidar_correspondences(const Kinematics& kin, const std::vector<Vec3>& points,
                                       const Vec3& sensor);
/// Mean squared distance to the given (fixed) correspondences; 0 for an empty cloud.
double e_lidar(const Kinematics& kin, const std::vector<Vec3>& points,
               const std::vector<int>& correspondences, Eigen::VectorXd* grad);
/// Convenience form that recomputes correspondences at `params`.
double e_lidar(const BodyParams& params, const LabeledCloud& cloud, const SkeletonTemplate& tmpl,
               const Vec3& sensor, Eigen::VectorXd* grad);

/// Mixture NLL of pose[3:72] plus ||shape||^2.
double e_pose_prior(const BodyParams& params, const GmmModel& prior, Eigen::VectorXd* grad);

/// Temporal mixture NLL of (dt, dtheta) rescaled to the prior's frame interval.
/// Gradient is w.r.t. `current` only.
double e_temporal(const BodyParams& current, const BodyParams& previous, const GmmModel& prior,
                  double dt, Eigen::VectorXd* grad);

/// Weighted per-frame objective with cached LiDAR correspondences.
class FrameEnergy {
 public:
  FrameEnergy(const SkeletonTemplate& tmpl, const StereoRig& rig, const Priors& priors,
              const EnergyWeights& weights, const FrameObservation& obs);

  void set_mask(const TermMask& mask) { mask_ = mask; }
  const TermMask& mask() const { return mask_; }
  /// Restrict reprojection to a keypoint subset (nullopt = all).
  void set_keypoint_subset(std::optional<std::array<bool, kNumKeypoints>> subset) {
    subset_ = subset;
  }
  void set_previous(std::optional<BodyParams> previous, double dt);
  /// Adds (rho/2) ||shape - center||^2.
  void set_shape_anchor(std::optional<Eigen::VectorXd> center, double rho);
  void set_heading_enabled(bool on) { heading_enabled_ = on; }

  void refresh_correspondences(const BodyParams& params);
  const std::vector<int>& correspondences() const { return corr_; }

  /// Uses the cached correspondences (refresh first).
  EnergyTerms evaluate(const BodyParams& params, Eigen::VectorXd* grad) const;
  /// Recomputes correspondences at `params`; no gradient.
  EnergyTerms evaluate_fresh(const BodyParams& params) const;

  const SkeletonTemplate& tmpl() const { return *tmpl_; }
  const FrameObservation& observation() const { return *obs_; }
  const std::optional<Vec3>& translation_target() const { return t0_; }

 private:
  EnergyTerms evaluate_with(const BodyParams& params, const std::vector<int>* corr,
                            Eigen::VectorXd* grad) const;

  const SkeletonTemplate* tmpl_;
  const StereoRig* rig_;
  const Priors* priors_;
  EnergyWeights weights_;
  const FrameObservation* obs_;
  TermMask mask_;
  std::optional<std::array<bool, kNumKeypoints>> subset_;
  std::optional<BodyParams> previous_;
  double dt_ = 0.0;
  std::optional<Eigen::VectorXd> anchor_;
  double rho_ = 0.0;
  bool heading_enabled_ = true;
  std::optional<Vec3> t0_;
  Vec3 sensor_;
  std::vector<int> corr_;
};

/// One-shot weighted total with fresh correspondences.
EnergyTerms e_total(const BodyParams& params, const FrameObservation& obs, const StereoRig& rig,
                    const SkeletonTemplate& tmpl, const Priors& priors,
                    const EnergyWeights& weights, const std::optional<BodyParams>& previous,
                    double dt, Eigen::VectorXd* grad, const TermMask& mask = {});

}  // namespace pedfit
