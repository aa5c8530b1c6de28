#include "pedfit/solver.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "pedfit/kernels.hpp"

namespace pedfit {

std::array<bool, kNumKeypoints> torso_keypoints() {
  std::array<bool, kNumKeypoints> s{};
  s.fill(false);
  for (int k : {int(kKpNeck), int(kKpLShoulder), int(kKpRShoulder), int(kKpLHip), int(kKpRHip)})
    s[k] = true;
  return s;
}

namespace {

int count_visible(const ImageKeypoints& kp, const std::array<bool, kNumKeypoints>& subset) {
  int n = 0;
  for (int k = 0; k < kNumKeypoints; ++k)
    if (subset[k] && kp.occlusion[k] != Occlusion::kAbsent) ++n;
  return n;
}

std::optional<Vec3> triangulated_center(const FrameObservation& obs, const StereoRig& rig) {
  auto tri = [&](int k) -> std::optional<Vec3> {
    if (obs.left.occlusion[k] == Occlusion::kAbsent ||
        obs.right.occlusion[k] == Occlusion::kAbsent)
      return std::nullopt;
    if (obs.left.pixels[k].x() - obs.right.pixels[k].x() <= 0.0) return std::nullopt;
    return triangulate(rig, obs.left.pixels[k], obs.right.pixels[k]);
  };
  const auto l = tri(kKpLHip);
  const auto r = tri(kKpRHip);
  if (l && r) return 0.5 * (*l + *r);
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (int k = 0; k < kNumKeypoints; ++k)
    if (auto p = tri(k)) {
      sum += *p;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

// Gradient restricted to the free coordinates.
struct Subspace {
  std::vector<int> free;
  Eigen::VectorXd gather(const Eigen::VectorXd& full) const {
    Eigen::VectorXd v(free.size());
    for (size_t i = 0; i < free.size(); ++i) v[i] = full[free[i]];
    return v;
  }
  void scatter(const Eigen::VectorXd& v, Eigen::VectorXd& full) const {
    for (size_t i = 0; i < free.size(); ++i) full[free[i]] = v[i];
  }
};

Subspace root_and_translation(int shape_dim) {
  Subspace s;
  for (int i = 0; i < 3; ++i) s.free.push_back(i);
  for (int i = 0; i < 3; ++i) s.free.push_back(translation_offset(shape_dim) + i);
  return s;
}

Subspace all_params(int shape_dim, bool fix_shape) {
  Subspace s;
  for (int i = 0; i < kPoseDim; ++i) s.free.push_back(i);
  if (!fix_shape)
    for (int i = 0; i < shape_dim; ++i) s.free.push_back(kPoseDim + i);
  for (int i = 0; i < 3; ++i) s.free.push_back(translation_offset(shape_dim) + i);
  return s;
}

struct StageOutcome {
  int iterations = 0;
  int evaluations = 0;
  int rounds = 0;
  LbfgsStatus status = LbfgsStatus::kIterationCap;
};

// Runs L-BFGS on `energy` over `space`, refreshing LiDAR correspondences
// between rounds. `x` is updated in place.
StageOutcome run_stage(FrameEnergy& energy, const Subspace& space, Eigen::VectorXd& x,
                       int shape_dim, const FitOptions& opt,
                       const std::function<void(const Eigen::VectorXd&)>& on_round) {
  StageOutcome out;
  int budget = opt.max_iterations_per_stage;
  const bool has_lidar = energy.mask().lidar && !energy.observation().cloud.points.empty();
  // Stale correspondences can hold the body in place, so with LiDAR the
  // budget is split into rounds with a refresh in between.
  const int rounds = has_lidar ? std::max(1, opt.max_correspondence_rounds) : 1;
  const int per_round = std::max(1, (budget + rounds - 1) / rounds);
  while (budget > 0) {
    energy.refresh_correspondences(BodyParams::unpack(x, shape_dim));
    const std::vector<int> before = energy.correspondences();
    Eigen::VectorXd full = x;
    Eigen::VectorXd grad_full(x.size());
    Objective f = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
      space.scatter(v, full);
      const EnergyTerms t = energy.evaluate(BodyParams::unpack(full, shape_dim), &grad_full);
      g = space.gather(grad_full);
      return t.total;
    };
    LbfgsOptions lo;
    lo.max_iterations = std::min(per_round, budget);
    lo.gradient_tolerance = opt.gradient_tolerance;
    lo.step_tolerance = opt.step_tolerance;
    const LbfgsResult r = minimize_lbfgs(f, space.gather(x), lo);
    space.scatter(r.x, x);
    budget -= std::max(1, r.iterations);
    out.iterations += r.iterations;
    out.evaluations += r.evaluations;
    out.status = r.status;
    ++out.rounds;
    if (on_round) on_round(x);
    if (!has_lidar) {
      if (r.status != LbfgsStatus::kIterationCap) break;
      continue;
    }
    energy.refresh_correspondences(BodyParams::unpack(x, shape_dim));
    if (energy.correspondences() == before && r.status != LbfgsStatus::kIterationCap) break;
  }
  return out;
}

}  // namespace

BodyParams init_params(const FrameObservation& obs, const StereoRig& rig,
                       const SkeletonTemplate& tmpl) {
  BodyParams p = BodyParams::zeros(tmpl.shape_dim());
  if (!obs.cloud.points.empty()) {
    p.translation = centroid(obs.cloud);
  } else if (auto c = triangulated_center(obs, rig)) {
    p.translation = *c;
  } else {
    throw FitError("frame " + std::to_string(obs.frame_id) +
                   ": no LiDAR points and no stereo keypoints to initialise from");
  }
  if (obs.heading) {
    const double yaw = yaw_between(tmpl.forward_axis, *obs.heading);
    p.set_joint_rotation(0, Vec3(0.0, yaw, 0.0));
  }
  return p;
}

SingleFrameInit init_single_frame(const FrameObservation& obs, const StereoRig& rig,
                                  const SkeletonTemplate& tmpl, const EnergyWeights& weights) {
  const auto torso = torso_keypoints();
  if (count_visible(obs.left, torso) < 2 || count_visible(obs.right, torso) < 2)
    throw FitError("frame " + std::to_string(obs.frame_id) +
                   ": single-frame init needs two torso keypoints in each image");
  FrameObservation o = obs;
  o.heading.reset();
  const BodyParams base = init_params(o, rig, tmpl);

  EnergyWeights w = weights;
  if (w.joints <= 0.0) w.joints = 1.0;
  Priors none;
  FrameEnergy energy(tmpl, rig, none, w, o);
  TermMask mask;
  mask.lidar = mask.temporal = mask.pose_prior = mask.heading = false;
  energy.set_mask(mask);
  energy.set_keypoint_subset(torso);

  const int b = tmpl.shape_dim();
  const Subspace space = root_and_translation(b);
  FitOptions opt;
  SingleFrameInit best;
  best.energy = std::numeric_limits<double>::infinity();
  for (int r = 0; r < 4; ++r) {
    BodyParams start = base;
    start.set_joint_rotation(0, Vec3(0.0, 0.5 * std::numbers::pi * r, 0.0));
    Eigen::VectorXd x = start.pack();
    run_stage(energy, space, x, b, opt, {});
    const BodyParams p = BodyParams::unpack(x, b);
    const double e = energy.evaluate(p, nullptr).total;
    if (e < best.energy) {
      best.energy = e;
      best.params = p;
      best.best_restart = r;
    }
  }
  return best;
}

FrameFit fit_frame(const FrameProblem& pb, const BodyParams& init, const FitOptions& opt) {
  const SkeletonTemplate& tmpl = *pb.tmpl;
  const int b = tmpl.shape_dim();

  FrameEnergy full(tmpl, *pb.rig, *pb.priors, pb.weights, *pb.obs);
  full.set_mask(pb.mask);
  if (pb.previous) full.set_previous(pb.previous, pb.dt);
  if (pb.shape_anchor) full.set_shape_anchor(pb.shape_anchor, pb.rho);
  if (pb.weights.heading_init_only) full.set_heading_enabled(false);

  FrameFit out;
  out.report.initial = full.evaluate_fresh(init);
  if (!std::isfinite(out.report.initial.total))
    throw FitError("frame " + std::to_string(pb.obs->frame_id) + ": non-finite initial energy");

  BodyParams best = init;
  double best_e = out.report.initial.total;
  auto consider = [&](const Eigen::VectorXd& x) {
    const BodyParams p = BodyParams::unpack(x, b);
    const double e = full.evaluate_fresh(p).total;
    if (e < best_e) {
      best_e = e;
      best = p;
    }
  };

  Eigen::VectorXd x = init.pack();
  if (opt.staged) {
    FrameEnergy coarse(tmpl, *pb.rig, *pb.priors, pb.weights, *pb.obs);
    TermMask m = pb.mask;
    m.temporal = m.pose_prior = false;
    coarse.set_mask(m);
    coarse.set_keypoint_subset(torso_keypoints());
    const StageOutcome s1 = run_stage(coarse, root_and_translation(b), x, b, opt, {});
    out.report.stage1_iterations = s1.iterations;
    out.report.evaluations += s1.evaluations;
    consider(x);
  }
  const StageOutcome s2 = run_stage(full, all_params(b, opt.fix_shape), x, b, opt, consider);
  out.report.stage2_iterations = s2.iterations;
  out.report.evaluations += s2.evaluations;
  out.report.correspondence_rounds = s2.rounds;
  out.report.status = s2.status;

  out.params = best;
  out.report.final = full.evaluate_fresh(best);
  return out;
}

std::string_view to_string(SequenceStatus s) {
  switch (s) {
    case SequenceStatus::kSingleFrame: return "single_frame";
    case SequenceStatus::kConverged: return "converged";
    case SequenceStatus::kIterationCap: return "iteration_cap";
  }
  return "unknown";
}

void assign_headings(std::vector<FrameObservation>& frames) {
  Trajectory traj;
  std::vector<int> frame_of_sample;
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].cloud.points.empty()) continue;
    traj.samples.push_back({frames[i].timestamp, centroid(frames[i].cloud)});
    frame_of_sample.push_back(static_cast<int>(i));
  }
  if (traj.samples.size() < 2) return;
  for (size_t s = 0; s < traj.samples.size(); ++s) {
    auto& f = frames[frame_of_sample[s]];
    if (f.heading) continue;
    const Heading h = heading_direction(traj, static_cast<int>(s));
    if (!h.stationary) f.heading = h.direction;
  }
}

std::vector<BodyParams> initialize_sequence(const std::vector<FrameObservation>& frames,
                                            const StereoRig& rig, const SkeletonTemplate& tmpl,
                                            const EnergyWeights& weights) {
  std::vector<BodyParams> init;
  init.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.heading) {
      init.push_back(init_params(f, rig, tmpl));
    } else {
      init.push_back(init_single_frame(f, rig, tmpl, weights).params);
    }
  }
  return init;
}

namespace {

void validate_sequence(const std::vector<FrameObservation>& frames) {
  if (frames.empty()) throw FitError("empty sequence");
  for (size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].track_id != frames[0].track_id)
      throw FitError("sequence mixes track ids " + std::to_string(frames[0].track_id) + " and " +
                     std::to_string(frames[i].track_id));
    if (!(frames[i].timestamp > frames[i - 1].timestamp))
      throw FitError("sequence timestamps must be strictly increasing");
  }
}

std::vector<EnergyTerms> final_energies(const std::vector<FrameObservation>& frames,
                                        const std::vector<BodyParams>& params,
                                        const StereoRig& rig, const SkeletonTemplate& tmpl,
                                        const Priors& priors, const EnergyWeights& weights,
                                        const TermMask& mask, bool temporal) {
  std::vector<EnergyTerms> out;
  for (size_t k = 0; k < frames.size(); ++k) {
    FrameEnergy e(tmpl, rig, priors, weights, frames[k]);
    e.set_mask(mask);
    if (temporal && k > 0)
      e.set_previous(params[k - 1], frames[k].timestamp - frames[k - 1].timestamp);
    out.push_back(e.evaluate_fresh(params[k]));
  }
  return out;
}

}  // namespace

FitResult fit_sequence(const std::vector<FrameObservation>& input, const StereoRig& rig,
                       const SkeletonTemplate& tmpl, const Priors& priors,
                       const EnergyWeights& weights, const AdmmConfig& cfg,
                       const FitOptions& options, const TermMask& mask,
                       const std::vector<BodyParams>* init) {
  const auto t_start = std::chrono::steady_clock::now();
  validate_sequence(input);
  if (!(cfg.rho > 0.0)) throw std::invalid_argument("admm rho must be positive");
  if (!mask.any_data_term()) throw std::invalid_argument("term mask selects no data term");

  std::vector<FrameObservation> frames = input;
  assign_headings(frames);
  if (init && init->size() != frames.size())
    throw std::invalid_argument("one initial parameter set per frame required");
  std::vector<BodyParams> x = init ? *init : initialize_sequence(frames, rig, tmpl, weights);
  const int n = static_cast<int>(frames.size());
  const int b = tmpl.shape_dim();

  FitResult result;
  result.inner_iterations.assign(n, 0);
  auto problem_for = [&](int k, const std::vector<BodyParams>& snapshot) {
    FrameProblem pb;
    pb.obs = &frames[k];
    pb.rig = &rig;
    pb.tmpl = &tmpl;
    pb.priors = &priors;
    pb.weights = weights;
    pb.mask = mask;
    if (k > 0) {
      pb.previous = snapshot[k - 1];
      pb.dt = frames[k].timestamp - frames[k - 1].timestamp;
    }
    return pb;
  };

  if (n == 1) {
    const FrameFit f = fit_frame(problem_for(0, x), x[0], options);
    result.params = {f.params};
    result.energies = {f.report.final};
    result.inner_iterations[0] = f.report.stage1_iterations + f.report.stage2_iterations;
    result.status = SequenceStatus::kSingleFrame;
    result.admm.local_shapes = {f.params.shape};
    result.admm.consensus = f.params.shape;
    result.admm.duals = {Eigen::VectorXd::Zero(b)};
    result.admm.rho = cfg.rho;
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
  }

  AdmmState& st = result.admm;
  st.rho = cfg.rho;
  st.consensus = Eigen::VectorXd::Zero(b);
  st.duals.assign(n, Eigen::VectorXd::Zero(b));
  st.local_shapes.assign(n, Eigen::VectorXd::Zero(b));
  result.status = SequenceStatus::kIterationCap;

  for (int t = 0; t < cfg.max_iterations; ++t) {
    const std::vector<BodyParams> snapshot = x;
    FitOptions opt = options;
    opt.staged = options.staged && t == 0;
    std::vector<FrameFit> fits(n);
#pragma omp parallel for schedule(dynamic, 1) if (cfg.parallel)
    for (int k = 0; k < n; ++k) {
      FrameProblem pb = problem_for(k, snapshot);
      pb.shape_anchor = st.consensus - st.duals[k];
      pb.rho = st.rho;
      fits[k] = fit_frame(pb, snapshot[k], opt);
    }
    for (int k = 0; k < n; ++k) {
      x[k] = fits[k].params;
      st.local_shapes[k] = x[k].shape;
      result.inner_iterations[k] += fits[k].report.stage1_iterations + fits[k].report.stage2_iterations;
    }

    const Eigen::VectorXd before = st.consensus;
    const std::vector<Eigen::VectorXd> duals_before = st.duals;
    Eigen::VectorXd next = Eigen::VectorXd::Zero(b);
    for (int k = 0; k < n; ++k) next += st.local_shapes[k] + st.duals[k];
    next /= static_cast<double>(n);
    double primal = 0.0;
    for (int k = 0; k < n; ++k) {
      st.duals[k] += st.local_shapes[k] - next;
      primal = std::max(primal, (st.local_shapes[k] - next).norm());
    }
    const double dual = st.rho * (before - next).norm();
    st.consensus = next;
    st.iteration = t + 1;
    st.primal_residuals.push_back(primal);
    st.dual_residuals.push_back(dual);
    if (cfg.keep_trace)
      st.trace.push_back({before, next, st.local_shapes, duals_before, st.duals});
    if (primal < cfg.primal_tolerance && dual < cfg.dual_tolerance) {
      result.status = SequenceStatus::kConverged;
      break;
    }
  }
  result.admm_iterations = st.iteration;

  // share the consensus shape and re-polish pose and translation
  for (auto& p : x) p.shape = st.consensus;
  const std::vector<BodyParams> snapshot = x;
  FitOptions polish = options;
  polish.staged = false;
  polish.fix_shape = true;
  std::vector<FrameFit> fits(n);
#pragma omp parallel for schedule(dynamic, 1) if (cfg.parallel)
  for (int k = 0; k < n; ++k) fits[k] = fit_frame(problem_for(k, snapshot), snapshot[k], polish);
  for (int k = 0; k < n; ++k) {
    x[k] = fits[k].params;
    result.inner_iterations[k] += fits[k].report.stage2_iterations;
  }

  result.params = x;
  result.energies = final_energies(frames, x, rig, tmpl, priors, weights, mask, true);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

FitResult fit_frames_independently(const std::vector<FrameObservation>& input,
                                   const StereoRig& rig, const SkeletonTemplate& tmpl,
                                   const Priors& priors, const EnergyWeights& weights,
                                   const FitOptions& options, const TermMask& mask) {
  const auto t_start = std::chrono::steady_clock::now();
  validate_sequence(input);
  std::vector<FrameObservation> frames = input;
  assign_headings(frames);
  const std::vector<BodyParams> init = initialize_sequence(frames, rig, tmpl, weights);
  const int n = static_cast<int>(frames.size());
  TermMask m = mask;
  m.temporal = false;
  FitResult result;
  result.params.resize(n);
  result.inner_iterations.assign(n, 0);
  for (int k = 0; k < n; ++k) {
    FrameProblem pb;
    pb.obs = &frames[k];
    pb.rig = &rig;
    pb.tmpl = &tmpl;
    pb.priors = &priors;
    pb.weights = weights;
    pb.mask = m;
    const FrameFit f = fit_frame(pb, init[k], options);
    result.params[k] = f.params;
    result.inner_iterations[k] = f.report.stage1_iterations + f.report.stage2_iterations;
  }
  result.energies = final_energies(frames, result.params, rig, tmpl, priors, weights, m, false);
  result.status = SequenceStatus::kSingleFrame;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace pedfit
