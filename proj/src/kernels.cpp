#include "pedfit/kernels.hpp"

#include <cmath>
#include <limits>

#ifdef PEDFIT_HAVE_OPENMP
#include <omp.h>
#endif

namespace pedfit::kernels {
namespace {

Correspondence facing_one(const Vec3& q, const std::vector<Vec3>& surface,
                          const std::vector<Vec3>& normals, const Vec3& sensor) {
  Correspondence best{-1, std::numeric_limits<double>::infinity()};
  Correspondence any{-1, std::numeric_limits<double>::infinity()};
  const size_t m = surface.size();
  for (size_t j = 0; j < m; ++j) {
    const double d = (q - surface[j]).squaredNorm();
    if (d < any.squared_distance) any = {static_cast<int>(j), d};
    if (d < best.squared_distance && normals[j].dot(sensor - surface[j]) >= 0.0)
      best = {static_cast<int>(j), d};
  }
  return best.index >= 0 ? best : any;
}

Correspondence nearest_one(const Vec3& q, const std::vector<Vec3>& surface) {
  Correspondence best{-1, std::numeric_limits<double>::infinity()};
  for (size_t j = 0; j < surface.size(); ++j) {
    const double d = (q - surface[j]).squaredNorm();
    if (d < best.squared_distance) best = {static_cast<int>(j), d};
  }
  return best;
}

double cast_one(const Vec3& origin, const Vec3& dir, const std::vector<Capsule>& capsules) {
  double best = -1.0;
  for (const auto& c : capsules) {
    const double t = ray_capsule(origin, dir, c);
    if (t > 0.0 && (best < 0.0 || t < best)) best = t;
  }
  return best;
}

}  // namespace

double ray_capsule(const Vec3& ro, const Vec3& rd, const Capsule& cap) {
  const Vec3 ba = cap.b - cap.a;
  const Vec3 oa = ro - cap.a;
  const double baba = ba.dot(ba);
  const double bard = ba.dot(rd);
  const double baoa = ba.dot(oa);
  const double rdoa = rd.dot(oa);
  const double oaoa = oa.dot(oa);
  const double r2 = cap.radius * cap.radius;
  const double a = baba - bard * bard;
  double b = baba * rdoa - baoa * bard;
  double c = baba * oaoa - baoa * baoa - r2 * baba;
  double h = b * b - a * c;
  if (a > 1e-15 && h >= 0.0) {
    const double t = (-b - std::sqrt(h)) / a;
    const double y = baoa + t * bard;
    if (t > 0.0 && y > 0.0 && y < baba) return t;  // cylinder body
  }
  // end caps
  double best = -1.0;
  for (const Vec3& o : {oa, Vec3(ro - cap.b)}) {
    b = rd.dot(o);
    c = o.dot(o) - r2;
    h = b * b - c;
    if (h < 0.0) continue;
    const double t = -b - std::sqrt(h);
    if (t > 0.0 && (best < 0.0 || t < best)) best = t;
  }
  return best;
}

int max_threads() {
#ifdef PEDFIT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::vector<Correspondence> facing_correspondences(const std::vector<Vec3>& queries,
                                                   const std::vector<Vec3>& surface,
                                                   const std::vector<Vec3>& normals,
                                                   const Vec3& sensor) {
  std::vector<Correspondence> out(queries.size());
  if (surface.empty()) return out;
  const long n = static_cast<long>(queries.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = facing_one(queries[i], surface, normals, sensor);
  return out;
}

std::vector<Correspondence> nearest_points(const std::vector<Vec3>& queries,
                                           const std::vector<Vec3>& surface) {
  std::vector<Correspondence> out(queries.size());
  if (surface.empty()) return out;
  const long n = static_cast<long>(queries.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = nearest_one(queries[i], surface);
  return out;
}

std::vector<double> cast_rays(const Vec3& origin, const std::vector<Vec3>& dirs,
                              const std::vector<Capsule>& capsules) {
  std::vector<double> out(dirs.size());
  const long n = static_cast<long>(dirs.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (long i = 0; i < n; ++i) out[i] = cast_one(origin, dirs[i], capsules);
  return out;
}

namespace serial {

std::vector<Correspondence> facing_correspondences(const std::vector<Vec3>& queries,
                                                   const std::vector<Vec3>& surface,
                                                   const std::vector<Vec3>& normals,
                                                   const Vec3& sensor) {
  std::vector<Correspondence> out(queries.size());
  if (surface.empty()) return out;
  for (size_t i = 0; i < queries.size(); ++i)
    out[i] = facing_one(queries[i], surface, normals, sensor);
  return out;
}

std::vector<Correspondence> nearest_points(const std::vector<Vec3>& queries,
                                           const std::vector<Vec3>& surface) {
  std::vector<Correspondence> out(queries.size());
  if (surface.empty()) return out;
  for (size_t i = 0; i < queries.size(); ++i) out[i] = nearest_one(queries[i], surface);
  return out;
}

std::vector<double> cast_rays(const Vec3& origin, const std::vector<Vec3>& dirs,
                              const std::vector<Capsule>& capsules) {
  std::vector<double> out(dirs.size());
  for (size_t i = 0; i < dirs.size(); ++i) out[i] = cast_one(origin, dirs[i], capsules);
  return out;
}

}  // namespace serial

}  // namespace pedfit::kernels
