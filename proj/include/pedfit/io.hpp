#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedfit/evaluation.hpp"
#include "pedfit/synth.hpp"

namespace pedfit {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
/// Strict parse of a whole string; throws IoError naming `what`.
double parse_double(const std::string& s, const std::string& what);

std::string read_file(const std::string& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
nlohmann::json parse_json_file(const std::string& path);

void save_template(const std::string& path, const SkeletonTemplate& tmpl);
SkeletonTemplate load_template(const std::string& path);

void save_rig(const std::string& path, const StereoRig& rig);
StereoRig load_rig(const std::string& path);

// ---------------------------------------------------------------- annotations

struct TrackSequence {
  int track_id = 0;
  std::vector<FrameObservation> frames;  // increasing timestamps
};

/// One JSON object per line; see README for the schema. Cloud references are
/// resolved against `cloud_dir` unless absolute. Throws IoError with
/// "file:line: field: reason" diagnostics.
std::vector<TrackSequence> load_sequence(const std::string& annotation_path,
                                         const std::string& cloud_dir);

/// Writes annotations plus one cloud CSV per frame into `cloud_dir`.
void save_annotations(const std::string& annotation_path, const std::string& cloud_dir,
                      const std::vector<FrameObservation>& frames);

nlohmann::ordered_json annotation_to_json(const FrameObservation& obs, const std::string& cloud_ref);
FrameObservation annotation_from_json(const nlohmann::json& j, const std::string& where);

// -------------------------------------------------------------- configuration

struct RunConfig {
  std::uint64_t seed = 0;
  std::string rig_path;             // empty: built-in rig
  std::string template_path;        // empty: built-in template
  std::string pose_prior_path;
  std::string temporal_prior_path;
  int shape_dim = kDefaultShapeDim;
  EnergyWeights weights;
  AdmmConfig admm;
  FitOptions solver;
  MotionPriorOptions priors;
  int prior_sequences = 40;         // synthetic corpus size for train-prior
  int prior_frames = 150;
  double prior_frame_interval = 1.0 / 30.0;
  SceneSpec scene;
  int scenes = 1;                   // scenes generated by synth / ablate
};

/// Every key is optional; unknown keys and invalid values are rejected.
/// Relative paths are resolved against the config file's directory.
RunConfig load_run_config(const std::string& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir);

// ------------------------------------------------------------------- results

struct FitRecord {
  int frame_id = 0;
  int track_id = 0;
  double timestamp = 0.0;
  BodyParams params;
};

/// JSON lines: one "frame" record per frame (parameters, energies, 3D
/// keypoints and their projections into both images), then one "summary"
/// record per track.
void save_fit_results(const std::string& path, const std::vector<TrackSequence>& tracks,
                      const std::vector<FitResult>& results, const SkeletonTemplate& tmpl,
                      const StereoRig& rig);
std::vector<FitRecord> load_fit_records(const std::string& path);

/// CSV: frame,joint,x,y,z,valid with joints in table order.
void save_joint_series(const std::string& path, const JointSeries& s);
JointSeries load_joint_series(const std::string& path);

/// CSV: t,tx,ty,tz,p0..p71,b0..b(B-1) per row; one file per motion sequence.
void save_motion(const std::string& path, const WalkSequence& seq);
WalkSequence load_motion(const std::string& path);

/// CSV: frame,<18 keypoint names> in px.
void save_disparity(const std::string& path, const std::vector<int>& frame_ids,
                    const DisparityTable& d);
DisparityTable load_disparity(const std::string& path, const std::vector<int>& frame_ids);

struct MetricRow {
  std::string name;
  Mpjpe mpjpe;
};
/// CSV: method,rknee,...,hip,mean (mm).
void save_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
/// CSV laid out like the ablation table: row, five term flags, root-relative
/// per-joint errors, their mean, then the global mean (mm).
void save_ablation_csv(const std::string& path, const std::vector<AblationResult>& rows);

}  // namespace pedfit
