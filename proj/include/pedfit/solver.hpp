#pragma once

#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pedfit/energies.hpp"
#include "pedfit/lbfgs.hpp"

namespace pedfit {

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shoulders, hips and neck.
std::array<bool, kNumKeypoints> torso_keypoints();

/// Translation from the cloud centroid (or the triangulated hip midpoint when
/// the cloud is empty), root yaw from the heading, template pose, zero shape.
BodyParams init_params(const FrameObservation& obs, const StereoRig& rig,
                       const SkeletonTemplate& tmpl);

struct SingleFrameInit {
  BodyParams params;
  int best_restart = 0;  // index into {0, pi/2, pi, 3pi/2}
  double energy = 0.0;
};

/// Root orientation and translation from torso reprojection plus the
/// translation term, restarted at four yaw angles.
SingleFrameInit init_single_frame(const FrameObservation& obs, const StereoRig& rig,
                                  const SkeletonTemplate& tmpl, const EnergyWeights& weights);

struct FrameProblem {
  const FrameObservation* obs = nullptr;
  const StereoRig* rig = nullptr;
  const SkeletonTemplate* tmpl = nullptr;
  const Priors* priors = nullptr;
  EnergyWeights weights;
  TermMask mask;
  std::optional<BodyParams> previous;
  double dt = 0.0;
  std::optional<Eigen::VectorXd> shape_anchor;  // ADMM: beta^t - u_k^t
  double rho = 0.0;
};

struct FitOptions {
  int max_iterations_per_stage = 200;
  double gradient_tolerance = 1e-6;
  double step_tolerance = 1e-10;
  int max_correspondence_rounds = 10;  // LiDAR refreshes; splits the stage budget
  bool staged = true;       // run the translation + root stage first
  bool fix_shape = false;   // keep the shape block at its initial value
};

struct FrameFitReport {
  EnergyTerms initial;
  EnergyTerms final;
  int stage1_iterations = 0;
  int stage2_iterations = 0;
  int evaluations = 0;
  int correspondence_rounds = 0;
  LbfgsStatus status = LbfgsStatus::kIterationCap;
};

struct FrameFit {
  BodyParams params;
  FrameFitReport report;
};

/// Minimizes the weighted per-frame energy. The returned total energy is never
/// above the initial one. Throws FitError when the initial energy is not finite.
FrameFit fit_frame(const FrameProblem& problem, const BodyParams& init,
                   const FitOptions& options = {});

struct AdmmConfig {
  double rho = 2.0;
  int max_iterations = 20;
  double primal_tolerance = 0.05;
  double dual_tolerance = 0.05;
  bool parallel = true;      // primal solves across frames with OpenMP
  bool keep_trace = false;   // store every iteration's shapes and duals
};

struct AdmmIteration {
  Eigen::VectorXd consensus_before;
  Eigen::VectorXd consensus_after;
  std::vector<Eigen::VectorXd> local_shapes;
  std::vector<Eigen::VectorXd> duals_before;
  std::vector<Eigen::VectorXd> duals_after;
};

struct AdmmState {
  std::vector<Eigen::VectorXd> local_shapes;
  Eigen::VectorXd consensus;
  std::vector<Eigen::VectorXd> duals;  // scaled: u_k = y_k / rho
  double rho = 2.0;
  int iteration = 0;
  std::vector<double> primal_residuals;  // max_k ||beta_k - beta||
  std::vector<double> dual_residuals;    // rho ||beta^t - beta^{t+1}||
  std::vector<AdmmIteration> trace;
};

enum class SequenceStatus { kSingleFrame, kConverged, kIterationCap };
std::string_view to_string(SequenceStatus s);

struct FitResult {
  std::vector<BodyParams> params;
  std::vector<EnergyTerms> energies;
  SequenceStatus status = SequenceStatus::kSingleFrame;
  int admm_iterations = 0;
  std::vector<int> inner_iterations;  // L-BFGS iterations per frame, summed
  double wall_seconds = 0.0;
  AdmmState admm;
};

/// Fills missing headings from the LiDAR centroid trajectory. Frames whose
/// heading is stationary (or that lack a cloud) keep an empty heading.
void assign_headings(std::vector<FrameObservation>& frames);

/// Per-frame initialisation as used by fit_sequence.
std::vector<BodyParams> initialize_sequence(const std::vector<FrameObservation>& frames,
                                            const StereoRig& rig, const SkeletonTemplate& tmpl,
                                            const EnergyWeights& weights);

/// ADMM consensus over the shared shape with per-frame primal solves.
/// Frames must share one track id and have increasing timestamps. `init`
/// replaces the default per-frame initialisation when given.
FitResult fit_sequence(const std::vector<FrameObservation>& frames, const StereoRig& rig,
                       const SkeletonTemplate& tmpl, const Priors& priors,
                       const EnergyWeights& weights, const AdmmConfig& admm = {},
                       const FitOptions& options = {}, const TermMask& mask = {},
                       const std::vector<BodyParams>* init = nullptr);

/// Independent per-frame fits without shape sharing or temporal links.
FitResult fit_frames_independently(const std::vector<FrameObservation>& frames,
                                   const StereoRig& rig, const SkeletonTemplate& tmpl,
                                   const Priors& priors, const EnergyWeights& weights,
                                   const FitOptions& options = {}, const TermMask& mask = {});

}  // namespace pedfit
