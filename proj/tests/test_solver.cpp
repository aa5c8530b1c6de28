#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace pedfit;

namespace {

struct Fixture {
  SkeletonTemplate tmpl = default_template();
  StereoRig rig = default_rig();
  const Priors& priors = testing::small_priors();
  EnergyWeights weights;

  FrameProblem problem(const FrameObservation& obs) const {
    FrameProblem pb;
    pb.obs = &obs;
    pb.rig = &rig;
    pb.tmpl = &tmpl;
    pb.priors = &priors;
    pb.weights = weights;
    return pb;
  }
};

}  // namespace

TEST_CASE("init_params") {
  Fixture fx;
  SceneSpec spec;
  const Scene scene = make_scene(fx.tmpl, fx.rig, spec, 31);
  FrameObservation obs = scene.frames[0];
  obs.heading = Vec3::UnitZ();
  BodyParams p = init_params(obs, fx.rig, fx.tmpl);
  CHECK(p.joint_rotation(0).norm() < 1e-12);
  CHECK(p.translation == centroid(obs.cloud));
  CHECK(p.shape.norm() == 0.0);
  obs.heading = -Vec3::UnitZ();
  p = init_params(obs, fx.rig, fx.tmpl);
  CHECK(std::abs(p.joint_rotation(0).norm() - std::numbers::pi) < 1e-9);

  // empty cloud: triangulated hip midpoint
  obs.cloud.points.clear();
  p = init_params(obs, fx.rig, fx.tmpl);
  const Vec3 l = triangulate(fx.rig, obs.left.pixels[kKpLHip], obs.right.pixels[kKpLHip]);
  const Vec3 r = triangulate(fx.rig, obs.left.pixels[kKpRHip], obs.right.pixels[kKpRHip]);
  CHECK((p.translation - 0.5 * (l + r)).norm() < 1e-9);

  obs.left.occlusion.fill(Occlusion::kAbsent);
  CHECK_THROWS_AS(init_params(obs, fx.rig, fx.tmpl), FitError);
}

TEST_CASE("init_single_frame recovers the yaw from the front and from behind") {
  Fixture fx;
  SceneSpec spec;
  spec.shape_sigma = 0.0;  // the init uses the template shape
  spec.heading_deg = 0.0;  // walking away: back to the cameras
  const Scene away = make_scene(fx.tmpl, fx.rig, spec, 5);
  const SingleFrameInit a = init_single_frame(away.frames[2], fx.rig, fx.tmpl, fx.weights);
  const double true_yaw = yaw_between(fx.tmpl.forward_axis,
                                      body_forward(away.truth.params[2], fx.tmpl.forward_axis));
  const auto yaw_error = [&](const BodyParams& p, double truth) {
    const double got = yaw_between(fx.tmpl.forward_axis, body_forward(p, fx.tmpl.forward_axis));
    return std::abs(std::remainder(got - truth, 2 * std::numbers::pi));
  };
  const double limit = 15.0 * std::numbers::pi / 180;
  CHECK(yaw_error(a.params, true_yaw) < limit);

  spec.heading_deg = 180.0;  // facing the cameras
  const Scene toward = make_scene(fx.tmpl, fx.rig, spec, 5);
  const SingleFrameInit t = init_single_frame(toward.frames[2], fx.rig, fx.tmpl, fx.weights);
  const double toward_yaw = yaw_between(
      fx.tmpl.forward_axis, body_forward(toward.truth.params[2], fx.tmpl.forward_axis));
  CHECK(yaw_error(t.params, toward_yaw) < limit);
  CHECK(std::abs(toward_yaw) > 2.5);

  FrameObservation bad = away.frames[0];
  for (int k : {kKpNeck, kKpLShoulder, kKpRShoulder, kKpLHip}) bad.left.occlusion[k] = Occlusion::kAbsent;
  CHECK_THROWS_AS(init_single_frame(bad, fx.rig, fx.tmpl, fx.weights), FitError);
}

TEST_CASE("fit_frame contracts") {
  Fixture fx;
  SceneSpec spec;
  const Scene scene = make_scene(fx.tmpl, fx.rig, spec, 12);
  const FrameObservation& obs = scene.frames[1];
  const BodyParams& truth = scene.truth.params[1];

  SUBCASE("ground truth is a fixed point of the reprojection energy") {
    FrameProblem pb = fx.problem(obs);
    pb.mask.translation = pb.mask.lidar = pb.mask.temporal = pb.mask.pose_prior =
        pb.mask.heading = false;
    const FrameFit f = fit_frame(pb, truth);
    CHECK(f.params.pack() == truth.pack());
  }
  SUBCASE("all-zero weights return the initialisation") {
    FrameProblem pb = fx.problem(obs);
    pb.weights.joints = pb.weights.lidar = pb.weights.pose_prior = pb.weights.translation =
        pb.weights.heading = pb.weights.temporal = 0.0;
    BodyParams init = truth;
    init.translation.z() += 0.4;
    CHECK(fit_frame(pb, init).params.pack() == init.pack());
  }
  SUBCASE("energy never increases and the perturbed fit recovers the joints") {
    FrameProblem pb = fx.problem(obs);
    BodyParams init = BodyParams::zeros(fx.tmpl.shape_dim());
    init.set_joint_rotation(0, matrix_to_axis_angle(yaw_rotation(10.0 * std::numbers::pi / 180) *
                                                    axis_angle_to_matrix(truth.joint_rotation(0))));
    init.translation = truth.translation + Vec3(0, 0, 0.3);
    const FrameFit f = fit_frame(pb, init);
    CHECK(f.report.final.total <= f.report.initial.total);
    const JointSeries pred = series_from_params({f.params}, {0}, fx.tmpl);
    const JointSeries gt = series_from_params({truth}, {0}, fx.tmpl);
    CHECK(mpjpe_global(pred, gt).mean_mm() < 40.0);
  }
  SUBCASE("non-finite init is rejected") {
    BodyParams init = truth;
    init.pose[5] = std::nan("");
    CHECK_THROWS_AS(fit_frame(fx.problem(obs), init), FitError);
  }
}

TEST_CASE("fit_sequence contracts") {
  Fixture fx;
  SceneSpec spec;
  spec.noise_px = 2.0;
  const Scene scene = make_scene(fx.tmpl, fx.rig, spec, 77);

  SUBCASE("a single frame reproduces fit_frame") {
    const std::vector<FrameObservation> one = {scene.frames[2]};
    const FitResult seq = fit_sequence(one, fx.rig, fx.tmpl, fx.priors, fx.weights);
    std::vector<FrameObservation> frames = one;
    assign_headings(frames);
    const auto init = initialize_sequence(frames, fx.rig, fx.tmpl, fx.weights);
    const FrameFit f = fit_frame(fx.problem(frames[0]), init[0]);
    CHECK(seq.status == SequenceStatus::kSingleFrame);
    CHECK(seq.params[0].pack() == f.params.pack());
  }
  SUBCASE("identical observations give identical shapes and zero duals") {
    std::vector<FrameObservation> frames(3, scene.frames[0]);
    for (int k = 0; k < 3; ++k) {
      frames[k].frame_id = k;
      frames[k].timestamp = 0.1 * k;
    }
    TermMask m;
    m.temporal = false;
    AdmmConfig cfg;
    cfg.max_iterations = 2;
    cfg.keep_trace = true;
    const FitResult r = fit_sequence(frames, fx.rig, fx.tmpl, fx.priors, fx.weights, cfg, {}, m);
    for (const auto& it : r.admm.trace) {
      for (int k = 1; k < 3; ++k) CHECK(it.local_shapes[k] == it.local_shapes[0]);
      for (const auto& u : it.duals_after) CHECK(u.norm() < 1e-12);
    }
  }
  SUBCASE("shared shape beats independent per-frame fits") {
    AdmmConfig cfg;
    cfg.keep_trace = true;
    const FitResult seq = fit_sequence(scene.frames, fx.rig, fx.tmpl, fx.priors, fx.weights, cfg);
    const FitResult ind =
        fit_frames_independently(scene.frames, fx.rig, fx.tmpl, fx.priors, fx.weights);
    const JointSeries gt = testing::truth_series(scene, fx.tmpl);
    const auto ids = testing::frame_ids(scene.frames);
    const double e_seq = mpjpe_global(series_from_params(seq.params, ids, fx.tmpl), gt).mean_mm();
    const double e_ind = mpjpe_global(series_from_params(ind.params, ids, fx.tmpl), gt).mean_mm();
    MESSAGE("sequence " << e_seq << " mm, independent " << e_ind << " mm");
    CHECK(e_seq < e_ind);
    for (const auto& p : seq.params) CHECK(p.shape == seq.admm.consensus);
    if (seq.status == SequenceStatus::kConverged) {
      CHECK(seq.admm.primal_residuals.back() <= 0.05);
      CHECK(seq.admm.dual_residuals.back() <= 0.05);
    }
    for (const auto& it : seq.admm.trace) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(it.consensus_after.size());
      for (size_t k = 0; k < it.local_shapes.size(); ++k)
        mean += it.local_shapes[k] + it.duals_before[k];
      mean /= double(it.local_shapes.size());
      CHECK((mean - it.consensus_after).norm() <= 1e-12);
      for (size_t k = 0; k < it.local_shapes.size(); ++k)
        CHECK(((it.duals_after[k] - it.duals_before[k]) -
               (it.local_shapes[k] - it.consensus_after)).norm() <= 1e-12);
    }
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(fit_sequence({}, fx.rig, fx.tmpl, fx.priors, fx.weights), FitError);
    auto mixed = scene.frames;
    mixed[1].track_id = 9;
    CHECK_THROWS_AS(fit_sequence(mixed, fx.rig, fx.tmpl, fx.priors, fx.weights), FitError);
    auto unordered = scene.frames;
    std::swap(unordered[0], unordered[1]);
    CHECK_THROWS_AS(fit_sequence(unordered, fx.rig, fx.tmpl, fx.priors, fx.weights), FitError);
    TermMask none;
    none.joints_left = none.joints_right = none.translation = none.lidar = none.temporal = false;
    CHECK_THROWS(fit_sequence(scene.frames, fx.rig, fx.tmpl, fx.priors, fx.weights, {}, {}, none));
  }
}

TEST_CASE("headings are filled from the LiDAR trajectory") {
  Fixture fx;
  SceneSpec spec;
  spec.heading_deg = 90.0;
  const Scene scene = make_scene(fx.tmpl, fx.rig, spec, 3);
  auto frames = scene.frames;
  assign_headings(frames);
  for (const auto& f : frames) {
    REQUIRE(f.heading.has_value());
    CHECK(f.heading->x() > 0.95);
  }
  spec.speed = 0.0;
  auto still = make_scene(fx.tmpl, fx.rig, spec, 3).frames;
  assign_headings(still);
  for (const auto& f : still) CHECK_FALSE(f.heading.has_value());
}
