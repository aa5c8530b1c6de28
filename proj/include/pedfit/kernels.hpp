#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version and a serial
// reference in `serial::`; both produce bit-identical results because every
// output element is computed independently.

#include <vector>

#include "pedfit/rotation.hpp"

namespace pedfit::kernels {

struct Correspondence {
  int index = -1;
  double squared_distance = 0.0;
};

/// For each query, nearest surface sample whose normal faces the sensor
/// (n . (sensor - v) >= 0). Falls back to all samples when none faces it.
std::vector<Correspondence> facing_correspondences(const std::vector<Vec3>& queries,
                                                   const std::vector<Vec3>& surface,
                                                   const std::vector<Vec3>& normals,
                                                   const Vec3& sensor);

/// Brute-force nearest neighbour for each query (lowest index wins ties).
std::vector<Correspondence> nearest_points(const std::vector<Vec3>& queries,
                                           const std::vector<Vec3>& surface);

struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.0;
};

/// Ray parameter of the first hit, or a negative value on a miss.
double ray_capsule(const Vec3& origin, const Vec3& dir, const Capsule& cap);

/// Nearest hit distance per unit-direction ray over all capsules (negative on miss).
std::vector<double> cast_rays(const Vec3& origin, const std::vector<Vec3>& dirs,
                              const std::vector<Capsule>& capsules);

int max_threads();

namespace serial {
std::vector<Correspondence> facing_correspondences(const std::vector<Vec3>& queries,
                                                   const std::vector<Vec3>& surface,
                                                   const std::vector<Vec3>& normals,
                                                   const Vec3& sensor);
std::vector<Correspondence> nearest_points(const std::vector<Vec3>& queries,
                                           const std::vector<Vec3>& surface);
std::vector<double> cast_rays(const Vec3& origin, const std::vector<Vec3>& dirs,
                              const std::vector<Capsule>& capsules);
}  // namespace serial

}  // namespace pedfit::kernels
