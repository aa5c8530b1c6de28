#pragma once

#include <functional>
#include <string_view>

#include <Eigen/Dense>

namespace pedfit {

struct LbfgsOptions {
  int max_iterations = 200;
  int memory = 10;
  double gradient_tolerance = 1e-6;  // infinity norm
  double step_tolerance = 1e-10;     // norm of the accepted step
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
};

enum class LbfgsStatus { kGradientTolerance, kStepTolerance, kIterationCap };
std::string_view to_string(LbfgsStatus s);

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::kIterationCap;
};

/// Objective: returns f(x) and writes the gradient into the second argument.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Limited-memory BFGS with Armijo backtracking. Never returns a point with a
/// larger objective than the start.
LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opt = {});

}  // namespace pedfit
