#include "pedfit/lbfgs.hpp"

#include <cmath>
#include <deque>

namespace pedfit {

std::string_view to_string(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::kGradientTolerance: return "gradient_tolerance";
    case LbfgsStatus::kStepTolerance: return "step_tolerance";
    case LbfgsStatus::kIterationCap: return "iteration_cap";
  }
  return "unknown";
}

LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x, const LbfgsOptions& opt) {
  const Eigen::Index n = x.size();
  LbfgsResult res;
  Eigen::VectorXd g(n);
  double fx = f(x, g);
  res.evaluations = 1;

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };
  std::deque<Pair> hist;
  Eigen::VectorXd g_new(n);
  std::vector<double> alpha;

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      res.status = LbfgsStatus::kGradientTolerance;
      break;
    }
    // two-loop recursion
    Eigen::VectorXd d = -g;
    alpha.assign(hist.size(), 0.0);
    for (int i = static_cast<int>(hist.size()) - 1; i >= 0; --i) {
      alpha[i] = hist[i].rho * hist[i].s.dot(d);
      d -= alpha[i] * hist[i].y;
    }
    if (!hist.empty()) {
      const auto& last = hist.back();
      d *= last.s.dot(last.y) / last.y.squaredNorm();
    } else {
      d /= std::max(1.0, g.norm());  // first step: unit length
    }
    for (size_t i = 0; i < hist.size(); ++i) {
      const double beta = hist[i].rho * hist[i].y.dot(d);
      d += (alpha[i] - beta) * hist[i].s;
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {  // not a descent direction: restart
      hist.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = fx;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      x_new = x + step * d;
      f_new = f(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= opt.backtrack;
    }
    res.iterations = it + 1;
    if (!accepted) {
      res.status = LbfgsStatus::kStepTolerance;
      break;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    x = x_new;
    fx = f_new;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      hist.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(hist.size()) > opt.memory) hist.pop_front();
    }
    if (s.norm() < opt.step_tolerance) {
      res.status = LbfgsStatus::kStepTolerance;
      break;
    }
    if (it + 1 == opt.max_iterations) res.status = LbfgsStatus::kIterationCap;
  }
  if (opt.max_iterations == 0) res.status = LbfgsStatus::kIterationCap;
  res.x = std::move(x);
  res.value = fx;
  return res;
}

}  // namespace pedfit
