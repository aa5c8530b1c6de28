#include "pedfit/energies.hpp"

#include <cmath>
#include <stdexcept>

#include "pedfit/kernels.hpp"

namespace pedfit {

double occlusion_weight(Occlusion o) {
  switch (o) {
    case Occlusion::kVisible: return 1.0;
    case Occlusion::kOccluded: return 0.5;
    case Occlusion::kAbsent: return 0.0;
  }
  return 0.0;
}

void EnergyWeights::validate() const {
  for (double w : {joints, lidar, pose_prior, translation, heading, temporal})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("energy weights must be finite and nonnegative");
  if (!(gm_sigma > 0.0)) throw std::invalid_argument("gm_sigma must be positive");
}

double geman_mcclure(double r2, double sigma) {
  const double s2 = sigma * sigma;
  return r2 * s2 / (s2 + r2);
}

double e_reproj(const Kinematics& kin, const ImageKeypoints& obs, const StereoRig& rig, Side side,
                double gm_sigma, Eigen::VectorXd* grad,
                const std::array<bool, kNumKeypoints>* subset) {
  const double s2 = gm_sigma * gm_sigma;
  double e = 0.0;
  for (int k = 0; k < kNumKeypoints; ++k) {
    const double w = occlusion_weight(obs.occlusion[k]);
    if (w == 0.0 || (subset && !(*subset)[k])) continue;
    const Vec3& p = kin.body().keypoints[k];
    const Projection pr = project(rig, p, side);
    if (!pr.in_front) {
      e += w * s2;  // saturated robustifier
      continue;
    }
    const Eigen::Vector2d r = pr.pixel - obs.pixels[k];
    const double r2 = r.squaredNorm();
    e += w * r2 * s2 / (s2 + r2);
    if (grad) {
      const double d = s2 / (s2 + r2);
      const double drho_dr2 = d * d;
      const Eigen::Vector2d g2 = 2.0 * w * drho_dr2 * r;
      const Vec3 g3 = project_jacobian(rig, p, side).transpose() * g2;
      kin.accumulate_keypoint(k, g3, *grad);
    }
  }
  return e;
}

double e_translation(const BodyParams& params, const Vec3& t0, Eigen::VectorXd* grad) {
  const Vec3 d = params.translation - t0;
  if (grad) grad->tail<3>() += 2.0 * d;
  return d.squaredNorm();
}

Vec3 body_forward(const BodyParams& params, const Vec3& forward_axis) {
  return axis_angle_to_matrix(params.joint_rotation(0)) * forward_axis;
}

double e_heading(const BodyParams& params, const Vec3& heading, const Vec3& forward_axis,
                 Eigen::VectorXd* grad) {
  const Vec3 f = body_forward(params, forward_axis);
  const Vec3 diff = f - heading;
  if (grad) {
    // df/da_k = (J_l e_k) x f
    const Mat3 jl = so3_left_jacobian(params.joint_rotation(0));
    const Vec3 c = f.cross(2.0 * diff);
    grad->head<3>() += jl.transpose() * c;
  }
  return diff.squaredNorm();
}

std::vector<int> lidar_correspondences(const Kinematics& kin, const std::vector<Vec3>& points,
                                       const Vec3& sensor) {
  const auto c = kernels::facing_correspondences(points, kin.body().surface_points,
                                                 kin.body().surface_normals, sensor);
  std::vector<int> idx(c.size());
  for (size_t i = 0; i < c.size(); ++i) idx[i] = c[i].index;
  return idx;
}

double e_lidar(const Kinematics& kin, const std::vector<Vec3>& points,
               const std::vector<int>& correspondences, Eigen::VectorXd* grad) {
  if (points.empty()) return 0.0;
  if (correspondences.size() != points.size())
    throw std::invalid_argument("e_lidar: one correspondence per point required");
  const double inv_n = 1.0 / static_cast<double>(points.size());
  const auto& surf = kin.body().surface_points;
  double e = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    const int j = correspondences[i];
    const Vec3 d = surf[j] - points[i];
    e += d.squaredNorm();
    if (grad) kin.accumulate_surface(j, 2.0 * inv_n * d, *grad);
  }
  return e * inv_n;
}

double e_lidar(const BodyParams& params, const LabeledCloud& cloud, const SkeletonTemplate& tmpl,
               const Vec3& sensor, Eigen::VectorXd* grad) {
  if (cloud.points.empty()) return 0.0;
  const Kinematics kin(tmpl, params);
  return e_lidar(kin, cloud.points, lidar_correspondences(kin, cloud.points, sensor), grad);
}

double e_pose_prior(const BodyParams& params, const GmmModel& prior, Eigen::VectorXd* grad) {
  if (prior.dim() != kPoseDim - 3)
    throw DimensionError("pose prior must be 69-dimensional, got " + std::to_string(prior.dim()));
  Eigen::VectorXd g;
  const double nll = prior.nll(body_pose_vector(params), grad ? &g : nullptr);
  const double shape = params.shape.squaredNorm();
  if (grad) {
    grad->segment<kPoseDim - 3>(3) += g;
    grad->segment(kPoseDim, params.shape.size()) += 2.0 * params.shape;
  }
  return nll + shape;
}

double e_temporal(const BodyParams& current, const BodyParams& previous, const GmmModel& prior,
                  double dt, Eigen::VectorXd* grad) {
  if (prior.dim() != kPoseDim + 3)
    throw DimensionError("temporal prior must be 75-dimensional, got " +
                         std::to_string(prior.dim()));
  if (!(dt > 0.0)) throw std::invalid_argument("e_temporal: dt must be positive");
  const double scale = prior.frame_interval() > 0.0 ? prior.frame_interval() / dt : 1.0;
  Eigen::VectorXd dx(kPoseDim + 3);
  dx.head<3>() = scale * (current.translation - previous.translation);
  dx.tail<kPoseDim>() = scale * (current.pose - previous.pose);
  Eigen::VectorXd g;
  const double nll = prior.nll(dx, grad ? &g : nullptr);
  if (grad) {
    grad->tail<3>() += scale * g.head<3>();
    grad->head<kPoseDim>() += scale * g.tail<kPoseDim>();
  }
  return nll;
}

FrameEnergy::FrameEnergy(const SkeletonTemplate& tmpl, const StereoRig& rig, const Priors& priors,
                         const EnergyWeights& weights, const FrameObservation& obs)
    : tmpl_(&tmpl), rig_(&rig), priors_(&priors), weights_(weights), obs_(&obs) {
  weights_.validate();
  if (!obs.cloud.points.empty()) t0_ = centroid(obs.cloud);
  sensor_ = rig.lidar_origin_global();
}

void FrameEnergy::set_previous(std::optional<BodyParams> previous, double dt) {
  if (previous && !(dt > 0.0)) throw std::invalid_argument("previous frame needs dt > 0");
  previous_ = std::move(previous);
  dt_ = dt;
}

void FrameEnergy::set_shape_anchor(std::optional<Eigen::VectorXd> center, double rho) {
  if (center && !(rho > 0.0)) throw std::invalid_argument("shape anchor needs rho > 0");
  anchor_ = std::move(center);
  rho_ = rho;
}

void FrameEnergy::refresh_correspondences(const BodyParams& params) {
  if (obs_->cloud.points.empty()) {
    corr_.clear();
    return;
  }
  const Kinematics kin(*tmpl_, params);
  corr_ = lidar_correspondences(kin, obs_->cloud.points, sensor_);
}

EnergyTerms FrameEnergy::evaluate(const BodyParams& params, Eigen::VectorXd* grad) const {
  return evaluate_with(params, &corr_, grad);
}

EnergyTerms FrameEnergy::evaluate_fresh(const BodyParams& params) const {
  return evaluate_with(params, nullptr, nullptr);
}

EnergyTerms FrameEnergy::evaluate_with(const BodyParams& params, const std::vector<int>* corr,
                                       Eigen::VectorXd* grad) const {
  if (params.shape.size() != tmpl_->shape_dim())
    throw DimensionError("params shape length differs from template");
  const EnergyWeights& w = weights_;
  const int n = params.size();
  if (grad) grad->setZero(n);
  Eigen::VectorXd g(n);
  EnergyTerms t;

  const bool use_lidar = mask_.lidar && w.lidar > 0.0 && !obs_->cloud.points.empty();
  const bool use_left = mask_.joints_left && w.joints > 0.0;
  const bool use_right = mask_.joints_right && w.joints > 0.0;
  std::optional<Kinematics> kin;
  if (use_lidar || use_left || use_right) kin.emplace(*tmpl_, params, use_lidar);
  const auto* subset = subset_ ? &*subset_ : nullptr;

  auto add = [&](double weight, double& slot, auto&& fn) {
    if (grad) g.setZero();
    slot = fn(grad ? &g : nullptr);
    t.total += weight * slot;
    if (grad) *grad += weight * g;
  };

  if (use_left)
    add(w.joints, t.joints_left, [&](Eigen::VectorXd* gg) {
      return e_reproj(*kin, obs_->left, *rig_, Side::kLeft, w.gm_sigma, gg, subset);
    });
  if (use_right)
    add(w.joints, t.joints_right, [&](Eigen::VectorXd* gg) {
      return e_reproj(*kin, obs_->right, *rig_, Side::kRight, w.gm_sigma, gg, subset);
    });
  if (use_lidar) {
    std::vector<int> fresh;
    if (!corr || corr->size() != obs_->cloud.points.size()) {
      fresh = lidar_correspondences(*kin, obs_->cloud.points, sensor_);
      corr = &fresh;
    }
    add(w.lidar, t.lidar, [&](Eigen::VectorXd* gg) {
      return e_lidar(*kin, obs_->cloud.points, *corr, gg);
    });
  }
  if (mask_.translation && w.translation > 0.0 && t0_)
    add(w.translation, t.translation,
        [&](Eigen::VectorXd* gg) { return e_translation(params, *t0_, gg); });
  if (mask_.heading && heading_enabled_ && w.heading > 0.0 && obs_->heading)
    add(w.heading, t.heading, [&](Eigen::VectorXd* gg) {
      return e_heading(params, *obs_->heading, tmpl_->forward_axis, gg);
    });
  if (mask_.pose_prior && w.pose_prior > 0.0 && !priors_->pose.empty())
    add(w.pose_prior, t.pose_prior,
        [&](Eigen::VectorXd* gg) { return e_pose_prior(params, priors_->pose, gg); });
  if (mask_.temporal && w.temporal > 0.0 && previous_ && !priors_->temporal.empty())
    add(w.temporal, t.temporal, [&](Eigen::VectorXd* gg) {
      return e_temporal(params, *previous_, priors_->temporal, dt_, gg);
    });
  if (anchor_) {
    const Eigen::VectorXd d = params.shape - *anchor_;
    t.shape_anchor = 0.5 * rho_ * d.squaredNorm();
    t.total += t.shape_anchor;
    if (grad) grad->segment(kPoseDim, d.size()) += rho_ * d;
  }
  return t;
}

EnergyTerms e_total(const BodyParams& params, const FrameObservation& obs, const StereoRig& rig,
                    const SkeletonTemplate& tmpl, const Priors& priors,
                    const EnergyWeights& weights, const std::optional<BodyParams>& previous,
                    double dt, Eigen::VectorXd* grad, const TermMask& mask) {
  FrameEnergy fe(tmpl, rig, priors, weights, obs);
  fe.set_mask(mask);
  if (previous) fe.set_previous(previous, dt);
  fe.refresh_correspondences(params);
  return fe.evaluate(params, grad);
}

}  // namespace pedfit
