#include "pedfit/evaluation.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/SVD>

namespace pedfit {

namespace {

constexpr std::array<std::string_view, kNumEvalJoints> kEvalNames = {
    "rknee", "lknee", "rankl", "lankl", "rsho", "lsho", "relb",
    "lelb",  "rwri",  "lwri",  "head",  "neck", "hip"};

// Evaluation joint -> annotation keypoint (hip handled separately).
constexpr std::array<int, kNumEvalJoints - 1> kEvalKeypoint = {
    kKpRKnee, kKpLKnee, kKpRAnkle, kKpLAnkle, kKpRShoulder, kKpLShoulder,
    kKpRElbow, kKpLElbow, kKpRWrist, kKpLWrist, kKpHead, kKpNeck};

std::map<int, int> index_by_frame(const JointSeries& s) {
  std::map<int, int> m;
  for (int i = 0; i < s.frames(); ++i)
    if (!m.emplace(s.frame_ids[i], i).second)
      throw EvalError("joint series repeats frame " + std::to_string(s.frame_ids[i]));
  return m;
}

}  // namespace

std::string_view eval_joint_name(int joint) { return kEvalNames.at(joint); }

void JointSeries::add_frame(int frame_id) {
  frame_ids.push_back(frame_id);
  std::array<Vec3, kNumEvalJoints> p;
  p.fill(Vec3::Zero());
  positions.push_back(p);
  std::array<bool, kNumEvalJoints> v{};
  v.fill(false);
  valid.push_back(v);
}

void JointSeries::validate() const {
  if (positions.size() != frame_ids.size() || valid.size() != frame_ids.size())
    throw EvalError("joint series arrays differ in length");
  for (size_t f = 0; f < positions.size(); ++f)
    for (int j = 0; j < kNumEvalJoints; ++j)
      if (valid[f][j] && !positions[f][j].allFinite())
        throw EvalError("non-finite valid joint in frame " + std::to_string(frame_ids[f]));
}

void set_from_keypoints(JointSeries& s, int frame, const std::array<Vec3, kNumKeypoints>& kp,
                        const std::array<bool, kNumKeypoints>& ok) {
  for (int j = 0; j < kNumEvalJoints - 1; ++j) {
    s.positions[frame][j] = kp[kEvalKeypoint[j]];
    s.valid[frame][j] = ok[kEvalKeypoint[j]];
  }
  s.valid[frame][kEvHip] = ok[kKpRHip] && ok[kKpLHip];
  s.positions[frame][kEvHip] = 0.5 * (kp[kKpRHip] + kp[kKpLHip]);
}

JointSeries series_from_params(const std::vector<BodyParams>& params,
                               const std::vector<int>& frame_ids, const SkeletonTemplate& tmpl) {
  if (params.size() != frame_ids.size())
    throw EvalError("one frame id per parameter set required");
  JointSeries s;
  std::array<bool, kNumKeypoints> all{};
  all.fill(true);
  for (size_t f = 0; f < params.size(); ++f) {
    s.add_frame(frame_ids[f]);
    set_from_keypoints(s, static_cast<int>(f), forward_kinematics(tmpl, params[f]).keypoints, all);
  }
  return s;
}

double Mpjpe::joint_mm(int j) const {
  return count[j] > 0 ? sum_mm[j] / count[j] : std::numeric_limits<double>::quiet_NaN();
}

int Mpjpe::total_count() const {
  int n = 0;
  for (int c : count) n += c;
  return n;
}

double Mpjpe::mean_mm() const {
  // sum_j joint_mm(j) * count_j / sum_j count_j
  double s = 0.0;
  for (int j = 0; j < kNumEvalJoints; ++j)
    if (count[j] > 0) s += joint_mm(j) * count[j];
  const int n = total_count();
  return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN();
}

void Mpjpe::merge(const Mpjpe& o) {
  for (int j = 0; j < kNumEvalJoints; ++j) {
    sum_mm[j] += o.sum_mm[j];
    count[j] += o.count[j];
  }
  skipped_frames += o.skipped_frames;
}

Mpjpe mpjpe_global(const JointSeries& pred, const JointSeries& gt) {
  pred.validate();
  gt.validate();
  const auto gidx = index_by_frame(gt);
  Mpjpe m;
  for (int f = 0; f < pred.frames(); ++f) {
    const auto it = gidx.find(pred.frame_ids[f]);
    if (it == gidx.end()) continue;
    const int g = it->second;
    for (int j = 0; j < kNumEvalJoints; ++j) {
      if (!pred.valid[f][j] || !gt.valid[g][j]) continue;
      m.sum_mm[j] += 1000.0 * (pred.positions[f][j] - gt.positions[g][j]).norm();
      ++m.count[j];
    }
  }
  if (m.total_count() == 0) throw EvalError("prediction and ground truth share no valid joints");
  return m;
}

Similarity fit_similarity(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size() || src.empty())
    throw std::invalid_argument("fit_similarity needs matching nonempty point sets");
  const double n = static_cast<double>(src.size());
  Vec3 ms = Vec3::Zero(), md = Vec3::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    ms += src[i];
    md += dst[i];
  }
  ms /= n;
  md /= n;
  Mat3 cov = Mat3::Zero();
  double var_s = 0.0;
  for (size_t i = 0; i < src.size(); ++i) {
    cov += (dst[i] - md) * (src[i] - ms).transpose();
    var_s += (src[i] - ms).squaredNorm();
  }
  cov /= n;
  var_s /= n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sgn = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sgn.z() = -1.0;
  Similarity s;
  s.rotation = svd.matrixU() * sgn.asDiagonal() * svd.matrixV().transpose();
  s.scale = var_s > 0.0 ? svd.singularValues().dot(sgn) / var_s : 1.0;
  s.translation = md - s.scale * (s.rotation * ms);
  return s;
}

Mpjpe mpjpe_relative(const JointSeries& pred, const JointSeries& gt) {
  pred.validate();
  gt.validate();
  const auto gidx = index_by_frame(gt);
  Mpjpe m;
  for (int f = 0; f < pred.frames(); ++f) {
    const auto it = gidx.find(pred.frame_ids[f]);
    if (it == gidx.end()) continue;
    const int g = it->second;
    std::vector<int> joints;
    std::vector<Vec3> src, dst;
    for (int j = 0; j < kNumEvalJoints; ++j) {
      if (!pred.valid[f][j] || !gt.valid[g][j]) continue;
      joints.push_back(j);
      src.push_back(pred.positions[f][j]);
      dst.push_back(gt.positions[g][j]);
    }
    if (joints.size() < 3) {
      ++m.skipped_frames;
      continue;
    }
    const Similarity s = fit_similarity(src, dst);
    for (size_t i = 0; i < joints.size(); ++i) {
      m.sum_mm[joints[i]] += 1000.0 * (s.apply(src[i]) - dst[i]).norm();
      ++m.count[joints[i]];
    }
  }
  if (m.total_count() == 0) throw EvalError("no frame has three mutually valid joints");
  return m;
}

JointSeries baseline_triangulation(const std::vector<FrameObservation>& frames,
                                   const StereoRig& rig) {
  JointSeries s;
  for (size_t f = 0; f < frames.size(); ++f) {
    const auto& o = frames[f];
    s.add_frame(o.frame_id);
    std::array<Vec3, kNumKeypoints> kp;
    std::array<bool, kNumKeypoints> ok{};
    for (int k = 0; k < kNumKeypoints; ++k) {
      kp[k] = Vec3::Zero();
      ok[k] = o.left.visible(k) && o.right.visible(k) &&
              o.left.pixels[k].x() - o.right.pixels[k].x() > 0.0;
      if (ok[k]) kp[k] = triangulate(rig, o.left.pixels[k], o.right.pixels[k]);
    }
    set_from_keypoints(s, static_cast<int>(f), kp, ok);
  }
  return s;
}

JointSeries baseline_left_disp(const std::vector<FrameObservation>& frames, const StereoRig& rig,
                               const DisparityTable& disparity) {
  if (disparity.size() != frames.size())
    throw std::invalid_argument("one disparity row per frame required");
  const JointSeries tri = baseline_triangulation(frames, rig);
  JointSeries s;
  for (size_t f = 0; f < frames.size(); ++f) {
    const auto& o = frames[f];
    s.add_frame(o.frame_id);
    std::array<Vec3, kNumKeypoints> kp;
    std::array<bool, kNumKeypoints> ok{};
    for (int k = 0; k < kNumKeypoints; ++k) {
      ok[k] = o.left.visible(k) && disparity[f][k] > 0.0;
      kp[k] = ok[k] ? back_project(rig, o.left.pixels[k],
                                   depth_from_disparity(rig, disparity[f][k]))
                    : Vec3::Zero();
    }
    set_from_keypoints(s, static_cast<int>(f), kp, ok);
    for (int j = 0; j < kNumEvalJoints; ++j) {
      if (s.valid[f][j]) continue;
      s.valid[f][j] = tri.valid[f][j];
      s.positions[f][j] = tri.positions[f][j];
    }
  }
  return s;
}

double mean_visible_disparity(const FrameObservation& obs,
                              const std::array<double, kNumKeypoints>& disparity) {
  double sum = 0.0;
  int n = 0;
  for (int k = 0; k < kNumKeypoints; ++k)
    if (obs.left.visible(k) && disparity[k] > 0.0) {
      sum += disparity[k];
      ++n;
    }
  return n > 0 ? sum / n : 0.0;
}

JointSeries baseline_monofit_disp(const std::vector<FrameObservation>& frames,
                                  const StereoRig& rig, const SkeletonTemplate& tmpl,
                                  const Priors& priors, const EnergyWeights& weights,
                                  const DisparityTable& disparity) {
  if (disparity.size() != frames.size())
    throw std::invalid_argument("one disparity row per frame required");
  TermMask mask;
  mask.joints_right = mask.translation = mask.lidar = mask.temporal = mask.heading = false;
  const auto torso = torso_keypoints();

  JointSeries s;
  for (size_t f = 0; f < frames.size(); ++f) {
    s.add_frame(frames[f].frame_id);
    FrameObservation o = frames[f];
    o.cloud.points.clear();
    o.heading.reset();
    o.right = ImageKeypoints();
    const double dbar = mean_visible_disparity(o, disparity[f]);
    int torso_visible = 0;
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    for (int k = 0; k < kNumKeypoints; ++k)
      if (torso[k] && o.left.visible(k)) {
        center += o.left.pixels[k];
        ++torso_visible;
      }
    if (dbar <= 0.0 || torso_visible < 2) continue;  // invalid frame
    const double depth = depth_from_disparity(rig, dbar);

    FrameProblem pb;
    pb.obs = &o;
    pb.rig = &rig;
    pb.tmpl = &tmpl;
    pb.priors = &priors;
    pb.weights = weights;
    pb.mask = mask;
    BodyParams best;
    double best_e = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 4; ++r) {
      BodyParams init = BodyParams::zeros(tmpl.shape_dim());
      init.translation = back_project(rig, center / torso_visible, depth);
      init.set_joint_rotation(0, Vec3(0.0, 0.5 * std::numbers::pi * r, 0.0));
      const FrameFit fit = fit_frame(pb, init);
      if (fit.report.final.total < best_e) {
        best_e = fit.report.final.total;
        best = fit.params;
      }
    }

    // metric placement: scale about the left camera centre
    const auto kp = forward_kinematics(tmpl, best).keypoints;
    double zsum = 0.0;
    int zn = 0;
    for (int k = 0; k < kNumKeypoints; ++k)
      if (o.left.visible(k) && disparity[f][k] > 0.0) {
        zsum += rig.global_to_camera(kp[k], Side::kLeft).z();
        ++zn;
      }
    const double scale = zn > 0 && zsum > 0.0 ? depth / (zsum / zn) : 1.0;
    std::array<Vec3, kNumKeypoints> placed;
    std::array<bool, kNumKeypoints> ok{};
    for (int k = 0; k < kNumKeypoints; ++k) {
      placed[k] = rig.camera_to_global(scale * rig.global_to_camera(kp[k], Side::kLeft), Side::kLeft);
      ok[k] = true;
    }
    set_from_keypoints(s, static_cast<int>(f), placed, ok);
  }
  return s;
}

TermMask AblationRow::mask() const {
  TermMask m;
  m.joints_left = joints_left;
  m.joints_right = joints_right;
  m.translation = translation;
  m.lidar = lidar;
  m.temporal = temporal;
  if (!m.any_data_term())
    throw std::invalid_argument("ablation row " + std::to_string(index) + " enables no term");
  return m;
}

std::vector<AblationRow> standard_ablation_rows() {
  //        idx  Jl    Jr     T      3D     tp
  return {{1, true, true, false, false, false}, {2, true, true, true, false, false},
          {3, true, true, true, false, true},   {4, true, true, true, true, false},
          {5, true, false, true, true, true},   {6, true, true, true, true, true}};
}

std::vector<AblationResult> run_ablation(const std::vector<AblationInput>& inputs,
                                         const StereoRig& rig, const SkeletonTemplate& tmpl,
                                         const Priors& priors, const EnergyWeights& weights,
                                         const std::vector<AblationRow>& rows,
                                         const AdmmConfig& admm, const FitOptions& options) {
  std::vector<AblationResult> out;
  for (const auto& row : rows) {
    const TermMask mask = row.mask();
    AblationResult r;
    r.row = row;
    for (const auto& in : inputs) {
      const FitResult fit = fit_sequence(in.frames, rig, tmpl, priors, weights, admm, options, mask);
      std::vector<int> ids;
      for (const auto& f : in.frames) ids.push_back(f.frame_id);
      const JointSeries pred = series_from_params(fit.params, ids, tmpl);
      const Mpjpe g = mpjpe_global(pred, in.truth);
      r.global.merge(g);
      r.relative.merge(mpjpe_relative(pred, in.truth));
      r.scene_global_mm.push_back(g.mean_mm());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pedfit
