#include "pedfit/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pedfit/io.hpp"

namespace pedfit {

bool point_in_polygon(const Polygon& poly, const Eigen::Vector2d& p) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

double orient(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

bool segments_cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                    const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 &&
         o3 != 0 && o4 != 0;
}

}  // namespace

bool polygon_is_simple(const Polygon& poly) {
  const size_t n = poly.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges
      if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

std::vector<LabeledCloud> label_points(const std::vector<Vec3>& points,
                                       const std::vector<InstanceMask>& masks,
                                       const StereoRig& rig, double timestamp) {
  std::vector<InstanceMask> sorted = masks;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });

  const size_t n = points.size();
  const size_t m = sorted.size();
  std::vector<std::vector<int>> hits(n);
  std::vector<Vec3> sum(m, Vec3::Zero());
  std::vector<int> count(m, 0);
  for (size_t i = 0; i < n; ++i) {
    const Projection pr = project(rig, points[i], Side::kLeft);
    if (!pr.in_front) continue;
    for (size_t k = 0; k < m; ++k) {
      if (point_in_polygon(sorted[k].left, pr.pixel)) {
        hits[i].push_back(static_cast<int>(k));
        sum[k] += points[i];
        ++count[k];
      }
    }
  }

  std::vector<LabeledCloud> out(m);
  for (size_t k = 0; k < m; ++k) {
    out[k].instance_id = sorted[k].instance_id;
    out[k].timestamp = timestamp;
  }
  for (size_t i = 0; i < n; ++i) {
    if (hits[i].empty()) continue;
    int best = hits[i][0];
    if (hits[i].size() > 1) {
      double best_d = std::numeric_limits<double>::infinity();
      for (int k : hits[i]) {
        const double d = (points[i] - sum[k] / count[k]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
    }
    out[best].points.push_back(points[i]);
  }
  return out;
}

Vec3 centroid(const LabeledCloud& cloud) {
  if (cloud.points.empty()) throw std::invalid_argument("centroid of an empty cloud");
  Vec3 s = Vec3::Zero();
  for (const auto& p : cloud.points) s += p;
  return s / static_cast<double>(cloud.points.size());
}

void Trajectory::validate() const {
  for (size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].timestamp > samples[i - 1].timestamp))
      throw std::invalid_argument("trajectory timestamps must be strictly increasing");
}

Heading heading_direction(const Trajectory& traj, int frame_index) {
  const int n = static_cast<int>(traj.samples.size());
  if (n < 2) throw std::invalid_argument("heading needs at least two trajectory samples");
  if (frame_index < 0 || frame_index >= n) throw std::out_of_range("heading frame index");
  traj.validate();
  const int lo = std::max(0, frame_index - 1);
  const int hi = std::min(n - 1, frame_index + 1);
  Vec3 delta = traj.samples[hi].centroid - traj.samples[lo].centroid;
  delta.y() = 0.0;
  Heading h;
  const double per_step = delta.norm() / (hi - lo);
  if (per_step < kStationaryDisplacement) {
    h.stationary = true;
    return h;
  }
  h.direction = delta.normalized();
  return h;
}

NearestResult nearest_model_point(const Vec3& query, const std::vector<Vec3>& surface) {
  if (surface.empty()) throw std::invalid_argument("nearest_model_point: empty surface");
  NearestResult r;
  r.squared_distance = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < surface.size(); ++j) {
    const double d = (query - surface[j]).squaredNorm();
    if (d < r.squared_distance) {
      r.squared_distance = d;
      r.index = static_cast<int>(j);
    }
  }
  return r;
}

std::vector<Vec3> read_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cloud file " + path);
  std::vector<Vec3> pts;
  std::string line;
  const bool ply = path.size() >= 4 && path.substr(path.size() - 4) == ".ply";
  int line_no = 0;
  if (ply) {
    std::getline(in, line);
    ++line_no;
    if (line.rfind("ply", 0) != 0) throw IoError(path + ": missing ply magic");
    long vertices = -1;
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream ls(line);
      std::string word;
      ls >> word;
      if (word == "format") {
        std::string fmt;
        ls >> fmt;
        if (fmt != "ascii") throw IoError(path + ": only ASCII PLY is supported");
      } else if (word == "element") {
        std::string kind;
        ls >> kind;
        if (kind == "vertex") ls >> vertices;
      } else if (word == "end_header") {
        break;
      }
    }
    if (vertices < 0) throw IoError(path + ": no vertex element");
    for (long i = 0; i < vertices; ++i) {
      if (!std::getline(in, line)) throw IoError(path + ": truncated vertex list");
      ++line_no;
      std::istringstream ls(line);
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z()))
        throw IoError(path + ":" + std::to_string(line_no) + ": bad vertex");
      pts.push_back(p);
    }
    return pts;
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) {
      if (line_no == 1) continue;  // header
      throw IoError(path + ":" + std::to_string(line_no) + ": expected x,y,z");
    }
    if (!p.allFinite()) throw IoError(path + ":" + std::to_string(line_no) + ": non-finite point");
    pts.push_back(p);
  }
  return pts;
}

void write_cloud_csv(const std::string& path, const std::vector<Vec3>& points) {
  std::ostringstream os;
  os << "x,y,z\n";
  for (const auto& p : points)
    os << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z())
       << '\n';
  write_file_atomic(path, os.str());
}

}  // namespace pedfit
