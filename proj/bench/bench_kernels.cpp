// Serial reference kernels against their OpenMP versions, plus the ADMM
// sequence fit with and without parallel primal solves.
//
//   bench_kernels [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include "pedfit/kernels.hpp"
#include "pedfit/solver.hpp"
#include "pedfit/synth.hpp"

using namespace pedfit;

namespace {

double seconds_per_call(const std::function<void()>& f, int repeats) {
  f();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / repeats;
}

void report(const std::string& name, double serial, double parallel, bool same) {
  std::printf("%-24s serial %9.3f ms  openmp %9.3f ms  speedup %5.2fx  %s\n", name.c_str(),
              1e3 * serial, 1e3 * parallel, serial / parallel, same ? "identical" : "MISMATCH");
}

bool same_corr(const std::vector<kernels::Correspondence>& a,
               const std::vector<kernels::Correspondence>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].index != b[i].index || a[i].squared_distance != b[i].squared_distance) return false;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 20;
  std::printf("threads: %d, repeats: %d\n", kernels::max_threads(), repeats);

  const SkeletonTemplate tmpl = default_template();
  const StereoRig rig = default_rig();
  SceneSpec spec;
  spec.lidar_azimuth_step_deg = 0.05;
  const Scene scene = make_scene(tmpl, rig, spec, 11);
  const BodyParams& truth = scene.truth.params.front();
  const PosedBody body = Kinematics(tmpl, truth).body();
  const std::vector<Vec3>& cloud = scene.frames.front().cloud.points;
  const Vec3 sensor = rig.lidar_origin_global();

  std::vector<Vec3> queries;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0.0, 0.02);
  for (int rep = 0; rep < 20; ++rep)
    for (const Vec3& p : cloud) queries.emplace_back(p + Vec3(jitter(rng), jitter(rng), jitter(rng)));

  {
    std::vector<kernels::Correspondence> a, b;
    const double ts = seconds_per_call(
        [&] { a = kernels::serial::facing_correspondences(queries, body.surface_points,
                                                          body.surface_normals, sensor); },
        repeats);
    const double tp = seconds_per_call(
        [&] { b = kernels::facing_correspondences(queries, body.surface_points,
                                                  body.surface_normals, sensor); },
        repeats);
    report("facing_correspondences", ts, tp, same_corr(a, b));
  }
  {
    std::vector<kernels::Correspondence> a, b;
    const double ts = seconds_per_call(
        [&] { a = kernels::serial::nearest_points(queries, body.surface_points); }, repeats);
    const double tp =
        seconds_per_call([&] { b = kernels::nearest_points(queries, body.surface_points); }, repeats);
    report("nearest_points", ts, tp, same_corr(a, b));
  }
  {
    const auto caps = body_capsules(tmpl, truth);
    std::vector<Vec3> dirs;
    std::uniform_real_distribution<double> u(-0.02, 0.02);
    const Vec3 to_body = (truth.translation - sensor).normalized();
    for (int i = 0; i < 200000; ++i) dirs.push_back((to_body + Vec3(u(rng), u(rng), 0.0)).normalized());
    std::vector<double> a, b;
    const double ts =
        seconds_per_call([&] { a = kernels::serial::cast_rays(sensor, dirs, caps); }, repeats);
    const double tp = seconds_per_call([&] { b = kernels::cast_rays(sensor, dirs, caps); }, repeats);
    report("cast_rays", ts, tp, a == b);
  }
  {
    const auto corpus = walk_corpus(tmpl, 10, 60, 1.0 / 30.0, 5);
    std::vector<std::vector<BodyParams>> seqs;
    std::vector<std::vector<double>> times;
    for (const auto& w : corpus) {
      seqs.push_back(w.params);
      times.push_back(w.timestamps);
    }
    const Priors pr = train_motion_priors(seqs, times, {});
    const EnergyWeights w;
    AdmmConfig serial_cfg;
    serial_cfg.parallel = false;
    AdmmConfig parallel_cfg;
    FitResult a, b;
    const int fit_repeats = std::max(1, repeats / 10);
    const double ts = seconds_per_call(
        [&] { a = fit_sequence(scene.frames, rig, tmpl, pr, w, serial_cfg); }, fit_repeats);
    const double tp = seconds_per_call(
        [&] { b = fit_sequence(scene.frames, rig, tmpl, pr, w, parallel_cfg); }, fit_repeats);
    bool same = a.params.size() == b.params.size();
    for (size_t k = 0; same && k < a.params.size(); ++k)
      same = a.params[k].pack() == b.params[k].pack();
    report("fit_sequence (5 frames)", ts, tp, same);
  }
  return 0;
}
