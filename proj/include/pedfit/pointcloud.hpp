#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pedfit/stereo.hpp"

namespace pedfit {

using Polygon = std::vector<Eigen::Vector2d>;

struct LabeledCloud {
  std::vector<Vec3> points;  // global frame, meters
  int instance_id = -1;
  double timestamp = 0.0;
};

struct InstanceMask {
  int instance_id = -1;
  Polygon left;
  Polygon right;
};

/// Even-odd rule; points on an edge may fall either way.
bool point_in_polygon(const Polygon& poly, const Eigen::Vector2d& p);
bool polygon_is_simple(const Polygon& poly);

/// Assigns each raw global point to at most one instance whose left mask
/// contains its left-image projection. Ties between overlapping masks go to
/// the instance whose provisional centroid (mean of all points inside its
/// mask) is nearer. Output is ordered by instance id; input order is kept
/// within each instance.
std::vector<LabeledCloud> label_points(const std::vector<Vec3>& points,
                                       const std::vector<InstanceMask>& masks,
                                       const StereoRig& rig, double timestamp = 0.0);

/// Throws std::invalid_argument on an empty cloud.
Vec3 centroid(const LabeledCloud& cloud);

struct TrajectorySample {
  double timestamp = 0.0;
  Vec3 centroid = Vec3::Zero();
};

struct Trajectory {
  std::vector<TrajectorySample> samples;  // strictly increasing timestamps
  void validate() const;
};

struct Heading {
  Vec3 direction = Vec3::UnitZ();  // horizontal unit vector when !stationary
  bool stationary = false;
};

inline constexpr double kStationaryDisplacement = 0.05;

/// Horizontal motion direction at `frame_index` from a 3-frame centered
/// difference (one-sided at the ends). Never negated: pedestrians are assumed
/// to walk forward.
Heading heading_direction(const Trajectory& traj, int frame_index);

struct NearestResult {
  int index = -1;
  double squared_distance = 0.0;
};

/// Exact nearest neighbour by linear scan; lowest index wins ties.
NearestResult nearest_model_point(const Vec3& query, const std::vector<Vec3>& surface);

/// Cloud files: CSV with one "x,y,z" row per point (an optional non-numeric
/// header line is skipped) or ASCII PLY with x y z as the first vertex
/// properties.
std::vector<Vec3> read_cloud(const std::string& path);
void write_cloud_csv(const std::string& path, const std::vector<Vec3>& points);

}  // namespace pedfit
