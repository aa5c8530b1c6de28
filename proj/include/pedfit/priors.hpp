#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pedfit/body_model.hpp"

namespace pedfit {

/// Full-covariance Gaussian mixture. Construction validates the parameters
/// and caches the Cholesky factors used by nll().
class GmmModel {
 public:
  GmmModel() = default;
  GmmModel(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
           std::vector<Eigen::MatrixXd> covariances, double frame_interval = 0.0);

  int dim() const { return dim_; }
  int components() const { return static_cast<int>(weights_.size()); }
  bool empty() const { return weights_.empty(); }
  /// Sampling interval of the training motion, seconds; 0 for static priors.
  double frame_interval() const { return frame_interval_; }

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covariances_; }

  /// -log sum_i w_i N(x; mu_i, Sigma_i), evaluated with log-sum-exp.
  /// When `grad` is non-null it receives d nll / dx.
  double nll(const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr) const;

  /// Per-component log(w_i N(x; mu_i, Sigma_i)).
  Eigen::VectorXd component_log_densities(const Eigen::VectorXd& x) const;

 private:
  int dim_ = 0;
  double frame_interval_ = 0.0;
  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> chol_;  // lower factors
  std::vector<double> log_norm_;       // log w - D/2 log 2pi - 1/2 log det
};

struct GmmFitOptions {
  int components = 1;
  std::uint64_t seed = 0;
  int max_iterations = 300;
  double tolerance = 1e-8;       // relative change of the objective
  double regularization = 1e-6;  // diagonal loading, see fit_gmm
  double frame_interval = 0.0;
};

struct GmmFit {
  GmmModel model;
  /// Penalized mean log-likelihood per EM iteration (index 0 = after init).
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// EM with k-means++ initialisation. Each covariance gets `regularization` on
/// its diagonal. The objective scales every component density by
/// exp(-regularization/2 * tr Sigma^-1), which makes that loaded update the
/// exact M-step, so the objective is non-decreasing; it is checked every
/// iteration. Throws std::invalid_argument on too few or non-finite samples.
GmmFit fit_gmm(const std::vector<Eigen::VectorXd>& samples, const GmmFitOptions& options);

/// 75-dim motion deltas (translation difference then 72 pose differences),
/// each rescaled to `target_interval` seconds. Output count = frames - 1.
std::vector<Eigen::VectorXd> pose_deltas(const std::vector<BodyParams>& sequence,
                                         const std::vector<double>& timestamps,
                                         double target_interval);

/// Body pose without the root orientation (69 values).
Eigen::VectorXd body_pose_vector(const BodyParams& params);

struct Priors {
  GmmModel pose;      // 69-dim
  GmmModel temporal;  // 75-dim
};

struct MotionPriorOptions {
  int pose_components = 8;
  int temporal_components = 10;
  std::uint64_t seed = 0;
  int max_iterations = 300;
  // Diagonal loading (rad^2, m^2). Synthetic corpora span a thin manifold;
  // without a floor the fitted densities are too sharp for unseen poses.
  double pose_regularization = 1e-3;
  double temporal_regularization = 1e-4;
};

/// Trains both priors from motion sequences (params with timestamps). The
/// temporal prior's frame interval is the median sampling interval.
Priors train_motion_priors(const std::vector<std::vector<BodyParams>>& sequences,
                           const std::vector<std::vector<double>>& timestamps,
                           const MotionPriorOptions& options);

void save_gmm(const std::string& path, const GmmModel& model);
GmmModel load_gmm(const std::string& path);

}  // namespace pedfit
