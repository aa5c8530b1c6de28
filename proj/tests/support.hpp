#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pedfit/evaluation.hpp"
#include "pedfit/io.hpp"

namespace pedfit::testing {

/// Priors trained on a small synthetic walking corpus; cached per process.
const Priors& small_priors();

/// Priors at the CLI's default corpus size (40 x 150 frames); cached.
const Priors& default_priors();

/// Random parameters around a standing pose at the given depth.
BodyParams random_params(std::mt19937_64& rng, int shape_dim, double depth = 20.0,
                         double pose_sigma = 0.3);

/// Central differences of f at x with step h.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h = 1e-5);

/// ||a - b|| / max(||b||, floor).
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8);

/// Worst relative gradient error of one energy term over `points` random
/// parameter sets (FD step 1e-5).
struct GradientReport {
  double worst = 0.0;
  int points = 0;
};
using TermFunction = std::function<double(const BodyParams&, Eigen::VectorXd*)>;
GradientReport check_term_gradient(const TermFunction& term, int points, std::uint64_t seed,
                                   int shape_dim);

std::vector<int> frame_ids(const std::vector<FrameObservation>& frames);
JointSeries truth_series(const Scene& scene, const SkeletonTemplate& tmpl);

}  // namespace pedfit::testing

namespace pedfit::testing {

struct NamedGradientReport {
  std::string name;
  GradientReport report;
};

/// Finite-difference check of every energy term (and the weighted total) on a
/// noisy 20 m scene with LiDAR, `points` random parameter sets per term.
std::vector<NamedGradientReport> gradient_suite(int points, std::uint64_t seed);

}  // namespace pedfit::testing
