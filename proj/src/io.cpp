#include "pedfit/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

namespace pedfit {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& what) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end)
    throw IoError(what + ": expected a number, got '" + s + "'");
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
}

json parse_json_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw IoError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw IoError(where + ": unknown key '" + key + "'");
  }
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing field '" + key + "'");
  return j.at(key);
}

template <class T>
T as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw IoError(where + ": wrong type");
  }
}

template <class T>
void optional_field(const json& j, const char* key, T& out, const std::string& where) {
  if (j.contains(key)) out = as<T>(j.at(key), where + "." + key);
}

Vec3 vec3_of(const json& j, const std::string& where) {
  const auto v = as<std::vector<double>>(j, where);
  if (v.size() != 3) throw IoError(where + ": expected 3 numbers");
  return Vec3(v[0], v[1], v[2]);
}

std::vector<double> to_vec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

ojson transform_json(const RigidTransform& t) {
  ojson j;
  ojson rows = ojson::array();
  for (int r = 0; r < 3; ++r) rows.push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  j["rotation"] = rows;
  j["translation"] = to_vec(t.translation);
  return j;
}

RigidTransform transform_of(const json& j, const std::string& where) {
  check_keys(j, {"rotation", "translation"}, where);
  RigidTransform t;
  const auto rows = as<std::vector<std::vector<double>>>(require(j, "rotation", where), where);
  if (rows.size() != 3) throw IoError(where + ".rotation: expected 3 rows");
  for (int r = 0; r < 3; ++r) {
    if (rows[r].size() != 3) throw IoError(where + ".rotation: expected 3 columns");
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rows[r][c];
  }
  t.translation = vec3_of(require(j, "translation", where), where + ".translation");
  return t;
}

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> csv_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

// ------------------------------------------------------------------ template

void save_template(const std::string& path, const SkeletonTemplate& t) {
  ojson j;
  j["format"] = "pedfit-template-1";
  j["parent"] = t.parent;
  ojson joints = ojson::array();
  for (const auto& p : t.joints) joints.push_back(to_vec(p));
  j["joints"] = joints;
  ojson basis = ojson::array();
  for (const auto& table : t.shape_basis) {
    ojson b = ojson::array();
    for (const auto& p : table) b.push_back(to_vec(p));
    basis.push_back(b);
  }
  j["shape_basis"] = basis;
  j["bone_radius"] = t.bone_radius;
  j["radius_basis"] = t.radius_basis;
  ojson kps = ojson::array();
  for (int k = 0; k < kNumKeypoints; ++k)
    kps.push_back({{"name", keypoint_name(k)},
                   {"joint", t.keypoints[k].joint},
                   {"offset", to_vec(t.keypoints[k].offset)}});
  j["keypoints"] = kps;
  j["forward_axis"] = to_vec(t.forward_axis);
  j["samples_per_bone"] = t.samples_per_bone;
  write_file_atomic(path, j.dump(1) + "\n");
}

SkeletonTemplate load_template(const std::string& path) {
  const json j = parse_json_file(path);
  const std::string w = path;
  check_keys(j, {"format", "parent", "joints", "shape_basis", "bone_radius", "radius_basis",
                 "keypoints", "forward_axis", "samples_per_bone"},
             w);
  if (as<std::string>(require(j, "format", w), w + ".format") != "pedfit-template-1")
    throw IoError(w + ": unknown template format");
  SkeletonTemplate t;
  const auto parent = as<std::vector<int>>(require(j, "parent", w), w + ".parent");
  if (parent.size() != kNumJoints) throw IoError(w + ".parent: expected 24 entries");
  std::copy(parent.begin(), parent.end(), t.parent.begin());
  const json& joints = require(j, "joints", w);
  if (!joints.is_array() || joints.size() != kNumJoints)
    throw IoError(w + ".joints: expected 24 entries");
  for (int i = 0; i < kNumJoints; ++i) t.joints[i] = vec3_of(joints[i], w + ".joints");
  for (const auto& table : require(j, "shape_basis", w)) {
    if (!table.is_array() || table.size() != kNumJoints)
      throw IoError(w + ".shape_basis: each table needs 24 entries");
    JointTable b;
    for (int i = 0; i < kNumJoints; ++i) b[i] = vec3_of(table[i], w + ".shape_basis");
    t.shape_basis.push_back(b);
  }
  const auto radius = as<std::vector<double>>(require(j, "bone_radius", w), w + ".bone_radius");
  if (radius.size() != kNumJoints) throw IoError(w + ".bone_radius: expected 24 entries");
  std::copy(radius.begin(), radius.end(), t.bone_radius.begin());
  for (const auto& row : as<std::vector<std::vector<double>>>(require(j, "radius_basis", w),
                                                              w + ".radius_basis")) {
    if (row.size() != kNumJoints) throw IoError(w + ".radius_basis: expected 24 entries per row");
    std::array<double, kNumJoints> r{};
    std::copy(row.begin(), row.end(), r.begin());
    t.radius_basis.push_back(r);
  }
  const json& kps = require(j, "keypoints", w);
  if (!kps.is_array() || kps.size() != kNumKeypoints)
    throw IoError(w + ".keypoints: expected 18 entries");
  std::set<int> seen;
  for (const auto& kp : kps) {
    check_keys(kp, {"name", "joint", "offset"}, w + ".keypoints");
    const int k = keypoint_index(as<std::string>(require(kp, "name", w), w + ".keypoints.name"));
    if (k < 0 || !seen.insert(k).second)
      throw IoError(w + ".keypoints: unknown or repeated keypoint name");
    t.keypoints[k].joint = as<int>(require(kp, "joint", w), w + ".keypoints.joint");
    t.keypoints[k].offset = vec3_of(require(kp, "offset", w), w + ".keypoints.offset");
  }
  t.forward_axis = vec3_of(require(j, "forward_axis", w), w + ".forward_axis");
  t.samples_per_bone = as<int>(require(j, "samples_per_bone", w), w + ".samples_per_bone");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(w + ": " + e.what());
  }
  return t;
}

// ----------------------------------------------------------------------- rig

void save_rig(const std::string& path, const StereoRig& rig) {
  ojson j;
  j["format"] = "pedfit-rig-1";
  j["focal"] = rig.focal;
  j["principal_point"] = {rig.principal_point.x(), rig.principal_point.y()};
  j["baseline"] = rig.baseline;
  j["image_size"] = {rig.image_size.x(), rig.image_size.y()};
  j["cam_to_global"] = transform_json(rig.cam_to_global);
  j["lidar_to_cam"] = transform_json(rig.lidar_to_cam);
  write_file_atomic(path, j.dump(1) + "\n");
}

StereoRig load_rig(const std::string& path) {
  const json j = parse_json_file(path);
  const std::string w = path;
  check_keys(j, {"format", "focal", "principal_point", "baseline", "image_size", "cam_to_global",
                 "lidar_to_cam"},
             w);
  if (as<std::string>(require(j, "format", w), w + ".format") != "pedfit-rig-1")
    throw IoError(w + ": unknown rig format");
  StereoRig rig;
  rig.focal = as<double>(require(j, "focal", w), w + ".focal");
  const auto pp = as<std::vector<double>>(require(j, "principal_point", w), w + ".principal_point");
  if (pp.size() != 2) throw IoError(w + ".principal_point: expected 2 numbers");
  rig.principal_point = Eigen::Vector2d(pp[0], pp[1]);
  rig.baseline = as<double>(require(j, "baseline", w), w + ".baseline");
  const auto sz = as<std::vector<int>>(require(j, "image_size", w), w + ".image_size");
  if (sz.size() != 2) throw IoError(w + ".image_size: expected 2 integers");
  rig.image_size = Eigen::Vector2i(sz[0], sz[1]);
  rig.cam_to_global = transform_of(require(j, "cam_to_global", w), w + ".cam_to_global");
  rig.lidar_to_cam = transform_of(require(j, "lidar_to_cam", w), w + ".lidar_to_cam");
  try {
    rig.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(w + ": " + e.what());
  }
  return rig;
}

// --------------------------------------------------------------- annotations

namespace {

ojson side_json(const ImageKeypoints& kp, const Polygon& poly) {
  ojson pts = ojson::array();
  for (int k = 0; k < kNumKeypoints; ++k)
    pts.push_back({kp.pixels[k].x(), kp.pixels[k].y(), static_cast<int>(kp.occlusion[k])});
  ojson p = ojson::array();
  for (const auto& v : poly) p.push_back({v.x(), v.y()});
  return ojson{{"keypoints", pts}, {"polygon", p}};
}

void side_from_json(const json& j, ImageKeypoints& kp, Polygon& poly, const std::string& w) {
  check_keys(j, {"keypoints", "polygon"}, w);
  const json& pts = require(j, "keypoints", w);
  if (!pts.is_array() || pts.size() != kNumKeypoints)
    throw IoError(w + ".keypoints: expected 18 keypoints, got " +
                  std::to_string(pts.is_array() ? pts.size() : 0));
  for (int k = 0; k < kNumKeypoints; ++k) {
    const std::string wk = w + ".keypoints[" + std::to_string(k) + "]";
    const json& e = pts[k];
    if (!e.is_array() || e.size() != 3) throw IoError(wk + ": expected [x, y, visibility]");
    kp.pixels[k] = Eigen::Vector2d(as<double>(e[0], wk), as<double>(e[1], wk));
    const int v = as<int>(e[2], wk);
    if (v < 0 || v > 2) throw IoError(wk + ": visibility must be 0, 1 or 2");
    kp.occlusion[k] = static_cast<Occlusion>(v);
    if (v != 2 && !kp.pixels[k].allFinite()) throw IoError(wk + ": non-finite pixel");
  }
  poly.clear();
  if (j.contains("polygon")) {
    for (const auto& v : j.at("polygon")) {
      if (!v.is_array() || v.size() != 2) throw IoError(w + ".polygon: expected [x, y] vertices");
      poly.emplace_back(as<double>(v[0], w + ".polygon"), as<double>(v[1], w + ".polygon"));
    }
    if (!poly.empty() && !polygon_is_simple(poly))
      throw IoError(w + ".polygon: polygon is not simple");
  }
}

}  // namespace

ojson annotation_to_json(const FrameObservation& o, const std::string& cloud_ref) {
  ojson j;
  j["frame_id"] = o.frame_id;
  j["track_id"] = o.track_id;
  j["timestamp"] = o.timestamp;
  j["left"] = side_json(o.left, o.mask_left);
  j["right"] = side_json(o.right, o.mask_right);
  j["cloud"] = cloud_ref;
  if (o.heading) j["heading"] = to_vec(*o.heading);
  return j;
}

FrameObservation annotation_from_json(const json& j, const std::string& w) {
  check_keys(j, {"frame_id", "track_id", "timestamp", "left", "right", "cloud", "heading"}, w);
  FrameObservation o;
  o.frame_id = as<int>(require(j, "frame_id", w), w + ": field 'frame_id'");
  o.track_id = as<int>(require(j, "track_id", w), w + ": field 'track_id'");
  o.timestamp = as<double>(require(j, "timestamp", w), w + ": field 'timestamp'");
  if (!std::isfinite(o.timestamp)) throw IoError(w + ": field 'timestamp': not finite");
  side_from_json(require(j, "left", w), o.left, o.mask_left, w + ": field 'left'");
  side_from_json(require(j, "right", w), o.right, o.mask_right, w + ": field 'right'");
  if (j.contains("heading")) {
    Vec3 h = vec3_of(j.at("heading"), w + ": field 'heading'");
    if (!(h.norm() > 0.0)) throw IoError(w + ": field 'heading': zero vector");
    o.heading = h.normalized();
  }
  o.cloud.instance_id = o.track_id;
  o.cloud.timestamp = o.timestamp;
  return o;
}

std::vector<TrackSequence> load_sequence(const std::string& annotation_path,
                                         const std::string& cloud_dir) {
  std::istringstream in(read_file(annotation_path));
  std::map<int, std::vector<FrameObservation>> groups;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = annotation_path + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(where + ": malformed record: " + e.what());
    }
    FrameObservation o = annotation_from_json(j, where);
    const std::string ref = j.contains("cloud") ? as<std::string>(j.at("cloud"), where + ": field 'cloud'") : "";
    if (!ref.empty()) {
      const std::string p = resolve(ref, cloud_dir);
      if (!fs::exists(p)) throw IoError(where + ": field 'cloud': file '" + p + "' not found");
      o.cloud.points = read_cloud(p);
    }
    groups[o.track_id].push_back(std::move(o));
  }
  std::vector<TrackSequence> out;
  for (auto& [track, frames] : groups) {
    std::stable_sort(frames.begin(), frames.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    for (size_t i = 1; i < frames.size(); ++i)
      if (!(frames[i].timestamp > frames[i - 1].timestamp))
        throw IoError(annotation_path + ": track " + std::to_string(track) +
                      ": timestamps not strictly increasing at frame " +
                      std::to_string(frames[i].frame_id));
    out.push_back({track, std::move(frames)});
  }
  return out;
}

void save_annotations(const std::string& annotation_path, const std::string& cloud_dir,
                      const std::vector<FrameObservation>& frames) {
  std::string text;
  for (const auto& o : frames) {
    const std::string ref =
        "track" + std::to_string(o.track_id) + "_frame" + std::to_string(o.frame_id) + ".csv";
    write_cloud_csv((fs::path(cloud_dir) / ref).string(), o.cloud.points);
    text += annotation_to_json(o, ref).dump() + "\n";
  }
  write_file_atomic(annotation_path, text);
}

// --------------------------------------------------------------------- config

ojson run_config_to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["rig"] = c.rig_path;
  j["template"] = c.template_path;
  j["pose_prior"] = c.pose_prior_path;
  j["temporal_prior"] = c.temporal_prior_path;
  j["shape_dim"] = c.shape_dim;
  const auto& w = c.weights;
  j["weights"] = {{"joints", w.joints},         {"lidar", w.lidar},
                  {"pose_prior", w.pose_prior}, {"translation", w.translation},
                  {"heading", w.heading},       {"temporal", w.temporal},
                  {"gm_sigma", w.gm_sigma},     {"heading_init_only", w.heading_init_only}};
  j["admm"] = {{"rho", c.admm.rho},
               {"max_iterations", c.admm.max_iterations},
               {"primal_tolerance", c.admm.primal_tolerance},
               {"dual_tolerance", c.admm.dual_tolerance},
               {"parallel", c.admm.parallel}};
  j["solver"] = {{"max_iterations_per_stage", c.solver.max_iterations_per_stage},
                 {"gradient_tolerance", c.solver.gradient_tolerance},
                 {"step_tolerance", c.solver.step_tolerance},
                 {"max_correspondence_rounds", c.solver.max_correspondence_rounds}};
  j["priors"] = {{"pose_components", c.priors.pose_components},
                 {"temporal_components", c.priors.temporal_components},
                 {"max_iterations", c.priors.max_iterations},
                 {"pose_regularization", c.priors.pose_regularization},
                 {"temporal_regularization", c.priors.temporal_regularization},
                 {"sequences", c.prior_sequences},
                 {"frames", c.prior_frames},
                 {"frame_interval", c.prior_frame_interval}};
  const auto& s = c.scene;
  j["scene"] = {{"n_frames", s.n_frames},
                {"frame_interval", s.frame_interval},
                {"distance", s.distance},
                {"lateral", s.lateral},
                {"speed", s.speed},
                {"heading_deg", s.heading_deg},
                {"noise_px", s.noise_px},
                {"occlusion", s.occlusion},
                {"lidar_dropout", s.lidar_dropout},
                {"lidar_azimuth_step_deg", s.lidar_azimuth_step_deg},
                {"lidar_elevation_step_deg", s.lidar_elevation_step_deg},
                {"lidar_min_height", s.lidar_min_height},
                {"disparity_noise_px", s.disparity_noise_px},
                {"shape_sigma", s.shape_sigma},
                {"track_id", s.track_id}};
  j["scenes"] = c.scenes;
  return j;
}

RunConfig run_config_from_json(const json& j, const std::string& base_dir) {
  const std::string w = "config";
  check_keys(j, {"seed", "rig", "template", "pose_prior", "temporal_prior", "shape_dim", "weights",
                 "admm", "solver", "priors", "scene", "scenes"},
             w);
  RunConfig c;
  optional_field(j, "seed", c.seed, w);
  optional_field(j, "rig", c.rig_path, w);
  optional_field(j, "template", c.template_path, w);
  optional_field(j, "pose_prior", c.pose_prior_path, w);
  optional_field(j, "temporal_prior", c.temporal_prior_path, w);
  optional_field(j, "shape_dim", c.shape_dim, w);
  optional_field(j, "scenes", c.scenes, w);
  c.rig_path = resolve(c.rig_path, base_dir);
  c.template_path = resolve(c.template_path, base_dir);
  c.pose_prior_path = resolve(c.pose_prior_path, base_dir);
  c.temporal_prior_path = resolve(c.temporal_prior_path, base_dir);

  if (j.contains("weights")) {
    const json& x = j.at("weights");
    const std::string ww = w + ".weights";
    check_keys(x, {"joints", "lidar", "pose_prior", "translation", "heading", "temporal",
                   "gm_sigma", "heading_init_only"},
               ww);
    auto& e = c.weights;
    optional_field(x, "joints", e.joints, ww);
    optional_field(x, "lidar", e.lidar, ww);
    optional_field(x, "pose_prior", e.pose_prior, ww);
    optional_field(x, "translation", e.translation, ww);
    optional_field(x, "heading", e.heading, ww);
    optional_field(x, "temporal", e.temporal, ww);
    optional_field(x, "gm_sigma", e.gm_sigma, ww);
    optional_field(x, "heading_init_only", e.heading_init_only, ww);
  }
  if (j.contains("admm")) {
    const json& x = j.at("admm");
    const std::string ww = w + ".admm";
    check_keys(x, {"rho", "max_iterations", "primal_tolerance", "dual_tolerance", "parallel"}, ww);
    optional_field(x, "rho", c.admm.rho, ww);
    optional_field(x, "max_iterations", c.admm.max_iterations, ww);
    optional_field(x, "primal_tolerance", c.admm.primal_tolerance, ww);
    optional_field(x, "dual_tolerance", c.admm.dual_tolerance, ww);
    optional_field(x, "parallel", c.admm.parallel, ww);
  }
  if (j.contains("solver")) {
    const json& x = j.at("solver");
    const std::string ww = w + ".solver";
    check_keys(x, {"max_iterations_per_stage", "gradient_tolerance", "step_tolerance",
                   "max_correspondence_rounds"},
               ww);
    optional_field(x, "max_iterations_per_stage", c.solver.max_iterations_per_stage, ww);
    optional_field(x, "gradient_tolerance", c.solver.gradient_tolerance, ww);
    optional_field(x, "step_tolerance", c.solver.step_tolerance, ww);
    optional_field(x, "max_correspondence_rounds", c.solver.max_correspondence_rounds, ww);
  }
  if (j.contains("priors")) {
    const json& x = j.at("priors");
    const std::string ww = w + ".priors";
    check_keys(x, {"pose_components", "temporal_components", "max_iterations",
                   "pose_regularization", "temporal_regularization", "sequences", "frames",
                   "frame_interval"},
               ww);
    optional_field(x, "pose_components", c.priors.pose_components, ww);
    optional_field(x, "temporal_components", c.priors.temporal_components, ww);
    optional_field(x, "max_iterations", c.priors.max_iterations, ww);
    optional_field(x, "pose_regularization", c.priors.pose_regularization, ww);
    optional_field(x, "temporal_regularization", c.priors.temporal_regularization, ww);
    optional_field(x, "sequences", c.prior_sequences, ww);
    optional_field(x, "frames", c.prior_frames, ww);
    optional_field(x, "frame_interval", c.prior_frame_interval, ww);
  }
  if (j.contains("scene")) {
    const json& x = j.at("scene");
    const std::string ww = w + ".scene";
    check_keys(x, {"n_frames", "frame_interval", "distance", "lateral", "speed", "heading_deg",
                   "noise_px", "occlusion", "lidar_dropout", "lidar_azimuth_step_deg",
                   "lidar_elevation_step_deg", "lidar_min_height", "disparity_noise_px",
                   "shape_sigma", "track_id"},
               ww);
    auto& s = c.scene;
    optional_field(x, "n_frames", s.n_frames, ww);
    optional_field(x, "frame_interval", s.frame_interval, ww);
    optional_field(x, "distance", s.distance, ww);
    optional_field(x, "lateral", s.lateral, ww);
    optional_field(x, "speed", s.speed, ww);
    optional_field(x, "heading_deg", s.heading_deg, ww);
    optional_field(x, "noise_px", s.noise_px, ww);
    optional_field(x, "occlusion", s.occlusion, ww);
    optional_field(x, "lidar_dropout", s.lidar_dropout, ww);
    optional_field(x, "lidar_azimuth_step_deg", s.lidar_azimuth_step_deg, ww);
    optional_field(x, "lidar_elevation_step_deg", s.lidar_elevation_step_deg, ww);
    optional_field(x, "lidar_min_height", s.lidar_min_height, ww);
    optional_field(x, "disparity_noise_px", s.disparity_noise_px, ww);
    optional_field(x, "shape_sigma", s.shape_sigma, ww);
    optional_field(x, "track_id", s.track_id, ww);
  }

  try {
    c.weights.validate();
    c.scene.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(w + ": " + e.what());
  }
  if (c.shape_dim < 0 || c.shape_dim > kDefaultShapeDim)
    throw IoError(w + ".shape_dim: must be in 0..10");
  if (!(c.admm.rho > 0.0)) throw IoError(w + ".admm.rho: must be > 0");
  if (c.admm.max_iterations < 1) throw IoError(w + ".admm.max_iterations: must be >= 1");
  if (!(c.admm.primal_tolerance > 0.0) || !(c.admm.dual_tolerance > 0.0))
    throw IoError(w + ".admm: tolerances must be > 0");
  if (c.solver.max_iterations_per_stage < 0 || c.solver.max_correspondence_rounds < 1)
    throw IoError(w + ".solver: iteration limits out of range");
  if (c.priors.pose_components < 1 || c.priors.temporal_components < 1)
    throw IoError(w + ".priors: component counts must be >= 1");
  if (!(c.priors.pose_regularization > 0.0) || !(c.priors.temporal_regularization > 0.0))
    throw IoError(w + ".priors: regularization must be > 0");
  if (c.prior_sequences < 1 || c.prior_frames < 2 || !(c.prior_frame_interval > 0.0))
    throw IoError(w + ".priors: corpus settings out of range");
  if (c.scenes < 1) throw IoError(w + ".scenes: must be >= 1");
  c.priors.seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const json j = parse_json_file(path);
  try {
    return run_config_from_json(j, fs::path(path).parent_path().string());
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

// -------------------------------------------------------------------- results

void save_fit_results(const std::string& path, const std::vector<TrackSequence>& tracks,
                      const std::vector<FitResult>& results, const SkeletonTemplate& tmpl,
                      const StereoRig& rig) {
  if (tracks.size() != results.size()) throw IoError("one fit result per track required");
  std::string text;
  for (size_t t = 0; t < tracks.size(); ++t) {
    const auto& frames = tracks[t].frames;
    const FitResult& r = results[t];
    for (size_t k = 0; k < frames.size(); ++k) {
      const BodyParams& p = r.params[k];
      const auto& e = r.energies[k];
      const PosedBody body = forward_kinematics(tmpl, p);
      ojson j;
      j["type"] = "frame";
      j["frame_id"] = frames[k].frame_id;
      j["track_id"] = tracks[t].track_id;
      j["timestamp"] = frames[k].timestamp;
      j["pose"] = std::vector<double>(p.pose.data(), p.pose.data() + p.pose.size());
      j["shape"] = std::vector<double>(p.shape.data(), p.shape.data() + p.shape.size());
      j["translation"] = to_vec(p.translation);
      j["energy"] = {{"joints_left", e.joints_left}, {"joints_right", e.joints_right},
                     {"lidar", e.lidar},             {"pose_prior", e.pose_prior},
                     {"translation", e.translation}, {"heading", e.heading},
                     {"temporal", e.temporal},       {"total", e.total}};
      ojson kp = ojson::array(), ol = ojson::array(), orr = ojson::array();
      for (const Vec3& q : body.keypoints) {
        kp.push_back(to_vec(q));
        const auto l = project(rig, q, Side::kLeft).pixel;
        const auto rr = project(rig, q, Side::kRight).pixel;
        ol.push_back({l.x(), l.y()});
        orr.push_back({rr.x(), rr.y()});
      }
      j["keypoints3d"] = kp;
      j["overlay_left"] = ol;
      j["overlay_right"] = orr;
      text += j.dump() + "\n";
    }
    ojson s;
    s["type"] = "summary";
    s["track_id"] = tracks[t].track_id;
    s["frames"] = frames.size();
    s["status"] = std::string(to_string(r.status));
    s["admm_iterations"] = r.admm_iterations;
    s["consensus_shape"] = std::vector<double>(r.admm.consensus.data(),
                                               r.admm.consensus.data() + r.admm.consensus.size());
    s["primal_residuals"] = r.admm.primal_residuals;
    s["dual_residuals"] = r.admm.dual_residuals;
    s["inner_iterations"] = r.inner_iterations;
    text += s.dump() + "\n";
  }
  write_file_atomic(path, text);
}

std::vector<FitRecord> load_fit_records(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<FitRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string w = path + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(w + ": malformed record: " + e.what());
    }
    if (as<std::string>(require(j, "type", w), w) != "frame") continue;
    FitRecord r;
    r.frame_id = as<int>(require(j, "frame_id", w), w + ": field 'frame_id'");
    r.track_id = as<int>(require(j, "track_id", w), w + ": field 'track_id'");
    r.timestamp = as<double>(require(j, "timestamp", w), w + ": field 'timestamp'");
    const auto pose = as<std::vector<double>>(require(j, "pose", w), w + ": field 'pose'");
    if (pose.size() != kPoseDim) throw IoError(w + ": field 'pose': expected 72 values");
    const auto shape = as<std::vector<double>>(require(j, "shape", w), w + ": field 'shape'");
    r.params = BodyParams::zeros(static_cast<int>(shape.size()));
    for (int i = 0; i < kPoseDim; ++i) r.params.pose[i] = pose[i];
    for (size_t i = 0; i < shape.size(); ++i) r.params.shape[i] = shape[i];
    r.params.translation = vec3_of(require(j, "translation", w), w + ": field 'translation'");
    out.push_back(r);
  }
  return out;
}

void save_joint_series(const std::string& path, const JointSeries& s) {
  s.validate();
  std::string text = "frame,joint,x,y,z,valid\n";
  for (int f = 0; f < s.frames(); ++f)
    for (int j = 0; j < kNumEvalJoints; ++j) {
      const Vec3& p = s.positions[f][j];
      text += std::to_string(s.frame_ids[f]) + "," + std::string(eval_joint_name(j)) + "," +
              format_double(p.x()) + "," + format_double(p.y()) + "," + format_double(p.z()) +
              "," + (s.valid[f][j] ? "1" : "0") + "\n";
    }
  write_file_atomic(path, text);
}

JointSeries load_joint_series(const std::string& path) {
  const auto lines = csv_lines(path);
  if (lines.empty() || lines[0] != "frame,joint,x,y,z,valid")
    throw IoError(path + ": expected header frame,joint,x,y,z,valid");
  JointSeries s;
  std::map<int, int> index;
  for (size_t i = 1; i < lines.size(); ++i) {
    const std::string w = path + ":" + std::to_string(i + 1);
    const auto c = split_csv(lines[i]);
    if (c.size() != 6) throw IoError(w + ": expected 6 columns");
    const int frame = static_cast<int>(parse_double(c[0], w + ": frame"));
    int joint = -1;
    for (int j = 0; j < kNumEvalJoints; ++j)
      if (c[1] == eval_joint_name(j)) joint = j;
    if (joint < 0) throw IoError(w + ": unknown joint '" + c[1] + "'");
    auto it = index.find(frame);
    if (it == index.end()) {
      it = index.emplace(frame, s.frames()).first;
      s.add_frame(frame);
    }
    s.positions[it->second][joint] = Vec3(parse_double(c[2], w + ": x"),
                                          parse_double(c[3], w + ": y"),
                                          parse_double(c[4], w + ": z"));
    if (c[5] != "0" && c[5] != "1") throw IoError(w + ": valid must be 0 or 1");
    s.valid[it->second][joint] = c[5] == "1";
  }
  s.validate();
  return s;
}

void save_motion(const std::string& path, const WalkSequence& seq) {
  if (seq.params.size() != seq.timestamps.size())
    throw IoError("motion needs one timestamp per frame");
  const int b = seq.params.empty() ? 0 : static_cast<int>(seq.params[0].shape.size());
  std::string text = "t,tx,ty,tz";
  for (int i = 0; i < kPoseDim; ++i) text += ",p" + std::to_string(i);
  for (int i = 0; i < b; ++i) text += ",b" + std::to_string(i);
  text += "\n";
  for (size_t k = 0; k < seq.params.size(); ++k) {
    const auto& p = seq.params[k];
    if (p.shape.size() != b) throw IoError("motion frames disagree on shape length");
    text += format_double(seq.timestamps[k]);
    for (int i = 0; i < 3; ++i) text += "," + format_double(p.translation[i]);
    for (int i = 0; i < kPoseDim; ++i) text += "," + format_double(p.pose[i]);
    for (int i = 0; i < b; ++i) text += "," + format_double(p.shape[i]);
    text += "\n";
  }
  write_file_atomic(path, text);
}

WalkSequence load_motion(const std::string& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw IoError(path + ": empty motion file");
  const auto header = split_csv(lines[0]);
  if (header.size() < 4 + kPoseDim || header[0] != "t")
    throw IoError(path + ": expected header t,tx,ty,tz,p0..p71[,b0..]");
  const int b = static_cast<int>(header.size()) - 4 - kPoseDim;
  WalkSequence seq;
  for (size_t i = 1; i < lines.size(); ++i) {
    const std::string w = path + ":" + std::to_string(i + 1);
    const auto c = split_csv(lines[i]);
    if (c.size() != header.size()) throw IoError(w + ": column count differs from header");
    BodyParams p = BodyParams::zeros(b);
    seq.timestamps.push_back(parse_double(c[0], w));
    for (int k = 0; k < 3; ++k) p.translation[k] = parse_double(c[1 + k], w);
    for (int k = 0; k < kPoseDim; ++k) p.pose[k] = parse_double(c[4 + k], w);
    for (int k = 0; k < b; ++k) p.shape[k] = parse_double(c[4 + kPoseDim + k], w);
    if (!p.all_finite()) throw IoError(w + ": non-finite value");
    seq.params.push_back(p);
  }
  return seq;
}

void save_disparity(const std::string& path, const std::vector<int>& frame_ids,
                    const DisparityTable& d) {
  if (frame_ids.size() != d.size()) throw IoError("one disparity row per frame required");
  std::string text = "frame";
  for (int k = 0; k < kNumKeypoints; ++k) text += "," + std::string(keypoint_name(k));
  text += "\n";
  for (size_t f = 0; f < d.size(); ++f) {
    text += std::to_string(frame_ids[f]);
    for (double v : d[f]) text += "," + format_double(v);
    text += "\n";
  }
  write_file_atomic(path, text);
}

DisparityTable load_disparity(const std::string& path, const std::vector<int>& frame_ids) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw IoError(path + ": empty disparity file");
  std::map<int, std::array<double, kNumKeypoints>> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    const std::string w = path + ":" + std::to_string(i + 1);
    const auto c = split_csv(lines[i]);
    if (c.size() != 1 + kNumKeypoints) throw IoError(w + ": expected 19 columns");
    std::array<double, kNumKeypoints> r{};
    for (int k = 0; k < kNumKeypoints; ++k) r[k] = parse_double(c[1 + k], w);
    rows[static_cast<int>(parse_double(c[0], w))] = r;
  }
  DisparityTable out;
  for (int id : frame_ids) {
    const auto it = rows.find(id);
    if (it == rows.end()) throw IoError(path + ": no disparity row for frame " + std::to_string(id));
    out.push_back(it->second);
  }
  return out;
}

void save_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::string text = "method";
  for (int j = 0; j < kNumEvalJoints; ++j) text += "," + std::string(eval_joint_name(j));
  text += ",mean\n";
  for (const auto& r : rows) {
    text += r.name;
    for (int j = 0; j < kNumEvalJoints; ++j) text += "," + format_double(r.mpjpe.joint_mm(j));
    text += "," + format_double(r.mpjpe.mean_mm()) + "\n";
  }
  write_file_atomic(path, text);
}

void save_ablation_csv(const std::string& path, const std::vector<AblationResult>& rows) {
  std::string text = "row,E_Jl,E_Jr,E_T,E_3D,E_tp";
  for (int j = 0; j < kNumEvalJoints; ++j) text += "," + std::string(eval_joint_name(j));
  text += ",mean,global\n";
  auto flag = [](bool b) { return b ? ",1" : ",0"; };
  for (const auto& r : rows) {
    text += std::to_string(r.row.index);
    text += flag(r.row.joints_left);
    text += flag(r.row.joints_right);
    text += flag(r.row.translation);
    text += flag(r.row.lidar);
    text += flag(r.row.temporal);
    for (int j = 0; j < kNumEvalJoints; ++j) text += "," + format_double(r.relative.joint_mm(j));
    text += "," + format_double(r.relative.mean_mm()) + "," + format_double(r.global.mean_mm()) +
            "\n";
  }
  write_file_atomic(path, text);
}

}  // namespace pedfit
