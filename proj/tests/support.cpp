#include "support.hpp"

#include <algorithm>

namespace pedfit::testing {

namespace {

Priors train(int sequences, int frames) {
  const SkeletonTemplate tmpl = default_template();
  const auto corpus = walk_corpus(tmpl, sequences, frames, 1.0 / 30.0, 7);
  std::vector<std::vector<BodyParams>> seqs;
  std::vector<std::vector<double>> times;
  for (const auto& w : corpus) {
    seqs.push_back(w.params);
    times.push_back(w.timestamps);
  }
  return train_motion_priors(seqs, times, {});
}

}  // namespace

const Priors& small_priors() {
  static const Priors p = train(12, 60);
  return p;
}

const Priors& default_priors() {
  static const Priors p = train(40, 150);
  return p;
}

BodyParams random_params(std::mt19937_64& rng, int shape_dim, double depth, double pose_sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  BodyParams p = BodyParams::zeros(shape_dim);
  for (int i = 0; i < kPoseDim; ++i) p.pose[i] = pose_sigma * n(rng);
  for (int i = 0; i < shape_dim; ++i) p.shape[i] = 0.5 * n(rng);
  p.translation = Vec3(0.5 * n(rng), 1.0 + 0.1 * n(rng), depth + 0.5 * n(rng));
  return p;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (int i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double fp = f(y);
    y[i] = x[i] - h;
    const double fm = f(y);
    y[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

GradientReport check_term_gradient(const TermFunction& term, int points, std::uint64_t seed,
                                   int shape_dim) {
  std::mt19937_64 rng(seed);
  GradientReport rep;
  for (int i = 0; i < points; ++i) {
    const BodyParams p = random_params(rng, shape_dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
    term(p, &g);
    const auto f = [&](const Eigen::VectorXd& v) {
      return term(BodyParams::unpack(v, shape_dim), nullptr);
    };
    const Eigen::VectorXd fd = numeric_gradient(f, p.pack());
    rep.worst = std::max(rep.worst, relative_error(g, fd));
    ++rep.points;
  }
  return rep;
}

std::vector<int> frame_ids(const std::vector<FrameObservation>& frames) {
  std::vector<int> ids;
  for (const auto& f : frames) ids.push_back(f.frame_id);
  return ids;
}

JointSeries truth_series(const Scene& scene, const SkeletonTemplate& tmpl) {
  return series_from_params(scene.truth.params, frame_ids(scene.frames), tmpl);
}

std::vector<NamedGradientReport> gradient_suite(int points, std::uint64_t seed) {
  const SkeletonTemplate tmpl = default_template();
  const StereoRig rig = default_rig();
  const Priors& priors = small_priors();
  SceneSpec spec;
  spec.noise_px = 2.0;
  spec.occlusion = "legs+random";
  const Scene scene = make_scene(tmpl, rig, spec, seed);
  FrameObservation obs = scene.frames[1];
  if (!obs.heading) obs.heading = Vec3::UnitX();
  const int b = tmpl.shape_dim();
  const Vec3 sensor = rig.lidar_origin_global();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const BodyParams previous = random_params(rng, b);
  const double sigma = EnergyWeights{}.gm_sigma;

  // check_term_gradient evaluates the gradient call first, so LiDAR
  // correspondences are frozen at the base point for the FD probes.
  std::vector<int> corr;
  const auto lidar = [&](const BodyParams& p, Eigen::VectorXd* g) {
    const Kinematics kin(tmpl, p);
    if (g) corr = lidar_correspondences(kin, obs.cloud.points, sensor);
    return e_lidar(kin, obs.cloud.points, corr, g);
  };
  FrameEnergy fe(tmpl, rig, priors, EnergyWeights{}, obs);
  fe.set_previous(previous, 0.1);
  Eigen::VectorXd anchor = Eigen::VectorXd::Constant(b, 0.3);
  fe.set_shape_anchor(anchor, 2.0);
  const auto total = [&](const BodyParams& p, Eigen::VectorXd* g) {
    if (g) fe.refresh_correspondences(p);
    return fe.evaluate(p, g).total;
  };

  const std::vector<std::pair<std::string, TermFunction>> terms = {
      {"E_J,l",
       [&](const BodyParams& p, Eigen::VectorXd* g) {
         return e_reproj(Kinematics(tmpl, p, false), obs.left, rig, Side::kLeft, sigma, g);
       }},
      {"E_J,r",
       [&](const BodyParams& p, Eigen::VectorXd* g) {
         return e_reproj(Kinematics(tmpl, p, false), obs.right, rig, Side::kRight, sigma, g);
       }},
      {"E_3d", lidar},
      {"E_T", [&](const BodyParams& p,
                  Eigen::VectorXd* g) { return e_translation(p, centroid(obs.cloud), g); }},
      {"E_D", [&](const BodyParams& p,
                  Eigen::VectorXd* g) { return e_heading(p, *obs.heading, tmpl.forward_axis, g); }},
      {"E_P", [&](const BodyParams& p,
                  Eigen::VectorXd* g) { return e_pose_prior(p, priors.pose, g); }},
      {"E_tp", [&](const BodyParams& p,
                   Eigen::VectorXd* g) { return e_temporal(p, previous, priors.temporal, 0.1, g); }},
      {"total", total},
  };
  std::vector<NamedGradientReport> out;
  std::uint64_t s = seed;
  for (const auto& [name, fn] : terms) out.push_back({name, check_term_gradient(fn, points, ++s, b)});
  return out;
}

}  // namespace pedfit::testing
