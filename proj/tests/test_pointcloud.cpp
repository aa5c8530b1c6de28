#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pedfit/kernels.hpp"
#include "support.hpp"

using namespace pedfit;
namespace fs = std::filesystem;

namespace {

Polygon square(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

}  // namespace

TEST_CASE("polygon predicates") {
  const Polygon sq = square(0, 0, 10, 10);
  CHECK(point_in_polygon(sq, {5, 5}));
  CHECK_FALSE(point_in_polygon(sq, {11, 5}));
  CHECK(polygon_is_simple(sq));
  const Polygon bow = {{0, 0}, {10, 10}, {10, 0}, {0, 10}};
  CHECK_FALSE(polygon_is_simple(bow));
  CHECK_FALSE(polygon_is_simple({{0, 0}, {1, 1}}));
  // concave L shape: notch is outside
  const Polygon ell = {{0, 0}, {10, 0}, {10, 4}, {4, 4}, {4, 10}, {0, 10}};
  CHECK(polygon_is_simple(ell));
  CHECK(point_in_polygon(ell, {2, 8}));
  CHECK_FALSE(point_in_polygon(ell, {8, 8}));
}

TEST_CASE("label_points assigns by left mask and resolves overlaps by centroid") {
  const StereoRig rig = default_rig();
  // two pedestrians' worth of points at 10 m and 20 m depth
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i) pts.push_back(rig.camera_to_global(Vec3(0.01 * i, 0, 10), Side::kLeft));
  for (int i = 0; i < 5; ++i) pts.push_back(rig.camera_to_global(Vec3(1.0 + 0.01 * i, 0, 20), Side::kLeft));
  pts.push_back(rig.camera_to_global(Vec3(-5, 0, 10), Side::kLeft));  // outside both
  const double cx = rig.principal_point.x(), cy = rig.principal_point.y();
  InstanceMask a{7, square(cx - 20, cy - 20, cx + 120, cy + 20), {}};
  InstanceMask b{3, square(cx + 60, cy - 20, cx + 200, cy + 20), {}};
  const auto out = label_points(pts, {a, b}, rig, 1.5);
  REQUIRE(out.size() == 2);
  CHECK(out[0].instance_id == 3);
  CHECK(out[1].instance_id == 7);
  CHECK(out[0].points.size() == 5);
  CHECK(out[1].points.size() == 5);
  CHECK(out[1].timestamp == 1.5);
  // each point lands in exactly one instance
  CHECK(out[0].points[0] == pts[5]);

  CHECK_THROWS_AS(centroid(LabeledCloud{}), std::invalid_argument);
  LabeledCloud c;
  c.points = {Vec3(0, 0, 0), Vec3(2, 4, 6)};
  CHECK(centroid(c) == Vec3(1, 2, 3));
}

TEST_CASE("heading from the centroid trajectory") {
  Trajectory t;
  for (int i = 0; i < 5; ++i) t.samples.push_back({0.1 * i, Vec3(0.14 * i, 1.0 + 0.01 * i, 20)});
  for (int i = 0; i < 5; ++i) {
    const Heading h = heading_direction(t, i);
    CHECK_FALSE(h.stationary);
    CHECK((h.direction - Vec3::UnitX()).norm() < 1e-12);
  }
  Trajectory still;
  for (int i = 0; i < 3; ++i) still.samples.push_back({0.1 * i, Vec3(0.01 * i, 1.0, 20)});
  CHECK(heading_direction(still, 1).stationary);
  Trajectory bad = t;
  bad.samples[2].timestamp = bad.samples[1].timestamp;
  CHECK_THROWS(heading_direction(bad, 0));
}

TEST_CASE("nearest neighbour and kernels agree with their serial references") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec3> surf, normals, queries;
  for (int i = 0; i < 500; ++i) {
    surf.emplace_back(n(rng), n(rng), n(rng));
    normals.push_back(Vec3(n(rng), n(rng), n(rng)).normalized());
  }
  for (int i = 0; i < 300; ++i) queries.emplace_back(n(rng), n(rng), n(rng));
  const auto a = kernels::nearest_points(queries, surf);
  const auto b = kernels::serial::nearest_points(queries, surf);
  REQUIRE(a.size() == queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    CHECK(a[i].index == b[i].index);
    CHECK(a[i].squared_distance == b[i].squared_distance);
    const NearestResult r = nearest_model_point(queries[i], surf);
    CHECK(r.index == a[i].index);
  }
  const Vec3 sensor(0, 0, -10);
  const auto fa = kernels::facing_correspondences(queries, surf, normals, sensor);
  const auto fb = kernels::serial::facing_correspondences(queries, surf, normals, sensor);
  for (size_t i = 0; i < queries.size(); ++i) {
    CHECK(fa[i].index == fb[i].index);
    CHECK(normals[fa[i].index].dot(sensor - surf[fa[i].index]) >= 0.0);
  }
  // ties go to the lowest index
  CHECK(nearest_model_point(Vec3::Zero(), {Vec3(1, 0, 0), Vec3(-1, 0, 0)}).index == 0);
}

TEST_CASE("ray-capsule intersection") {
  const kernels::Capsule cap{Vec3(0, -1, 5), Vec3(0, 1, 5), 0.5};
  CHECK(kernels::ray_capsule(Vec3::Zero(), Vec3::UnitZ(), cap) == doctest::Approx(4.5));
  CHECK(kernels::ray_capsule(Vec3::Zero(), -Vec3::UnitZ(), cap) < 0.0);
  // through the spherical cap at the top end
  const Vec3 d = Vec3(0, 1.2, 5).normalized();
  const double t = kernels::ray_capsule(Vec3::Zero(), d, cap);
  REQUIRE(t > 0.0);
  CHECK(((t * d - Vec3(0, 1, 5)).norm()) == doctest::Approx(0.5));

  std::vector<Vec3> dirs;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int i = 0; i < 2000; ++i) dirs.push_back(Vec3(u(rng), u(rng), 1.0).normalized());
  const std::vector<kernels::Capsule> caps = {cap, {Vec3(0.3, 0, 4), Vec3(0.6, 0, 4), 0.2}};
  CHECK(kernels::cast_rays(Vec3::Zero(), dirs, caps) ==
        kernels::serial::cast_rays(Vec3::Zero(), dirs, caps));
}

TEST_CASE("cloud files") {
  const fs::path dir = fs::temp_directory_path() / "pedfit_cloud_test";
  fs::create_directories(dir);
  const std::vector<Vec3> pts = {Vec3(0.1, 0.2, 0.3), Vec3(-1.0 / 3.0, 1e-17, 20.25)};
  write_cloud_csv((dir / "c.csv").string(), pts);
  CHECK(read_cloud((dir / "c.csv").string()) == pts);
  {
    std::ofstream ply(dir / "c.ply");
    ply << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
           "property float z\nproperty float intensity\nend_header\n1 2 3 9\n4 5 6 9\n";
  }
  const auto p = read_cloud((dir / "c.ply").string());
  REQUIRE(p.size() == 2);
  CHECK(p[1] == Vec3(4, 5, 6));
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "x,y,z\n1,2\n";
  }
  CHECK_THROWS(read_cloud((dir / "bad.csv").string()));
  CHECK_THROWS(read_cloud((dir / "missing.csv").string()));
  fs::remove_all(dir);
}
