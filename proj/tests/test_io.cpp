#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "support.hpp"

using namespace pedfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

void write(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace

TEST_CASE("number formatting round-trips exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 20 - 10);
    CHECK(parse_double(format_double(v), "v") == v);
  }
  CHECK(parse_double(format_double(0.1), "v") == 0.1);
  CHECK_THROWS_AS(parse_double("1.5x", "field"), IoError);
  CHECK_THROWS_AS(parse_double("", "field"), IoError);
}

TEST_CASE("annotation files") {
  TempDir dir("pedfit_io_ann");
  const SkeletonTemplate tmpl = default_template();
  const StereoRig rig = default_rig();
  SceneSpec spec;
  spec.n_frames = 3;
  spec.noise_px = 1.5;
  spec.occlusion = "legs+random";
  Scene a = make_scene(tmpl, rig, spec, 4);
  spec.track_id = 2;
  Scene b = make_scene(tmpl, rig, spec, 5);

  SUBCASE("round trip groups tracks and keeps every field") {
    // interleave the two tracks and reverse one of them
    std::vector<FrameObservation> all = {b.frames[2], a.frames[0], b.frames[0], a.frames[2],
                                         a.frames[1], b.frames[1]};
    all[0].heading = Vec3(1, 0, 0);
    save_annotations(dir / "ann.jsonl", dir.path.string(), all);
    const auto tracks = load_sequence(dir / "ann.jsonl", dir.path.string());
    REQUIRE(tracks.size() == 2);
    CHECK(tracks[0].track_id == 1);
    CHECK(tracks[1].track_id == 2);
    REQUIRE(tracks[0].frames.size() == 3);
    for (int k = 0; k < 3; ++k) {
      const FrameObservation& got = tracks[0].frames[k];
      const FrameObservation& want = a.frames[k];
      CHECK(got.frame_id == k);
      CHECK(got.timestamp == want.timestamp);
      CHECK(got.left.pixels == want.left.pixels);
      CHECK(got.right.occlusion == want.right.occlusion);
      CHECK(got.mask_left == want.mask_left);
      CHECK(got.cloud.points == want.cloud.points);
    }
    REQUIRE(tracks[1].frames[2].heading.has_value());
    CHECK(*tracks[1].frames[2].heading == Vec3(1, 0, 0));
  }
  SUBCASE("schema violations name the record") {
    auto j = annotation_to_json(a.frames[0], "");
    j["left"]["keypoints"].erase(17);
    write(dir / "bad.jsonl", annotation_to_json(a.frames[1], "").dump() + "\n" + j.dump() + "\n");
    try {
      load_sequence(dir / "bad.jsonl", dir.path.string());
      FAIL("expected an IoError");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("bad.jsonl:2") != std::string::npos);
      CHECK(msg.find("18 keypoints") != std::string::npos);
    }
    auto extra = annotation_to_json(a.frames[0], "");
    extra["colour"] = "red";
    write(dir / "extra.jsonl", extra.dump() + "\n");
    CHECK_THROWS_AS(load_sequence(dir / "extra.jsonl", dir.path.string()), IoError);
    write(dir / "missing.jsonl", annotation_to_json(a.frames[0], "nope.csv").dump() + "\n");
    CHECK_THROWS_AS(load_sequence(dir / "missing.jsonl", dir.path.string()), IoError);
    auto dup = annotation_to_json(a.frames[0], "");
    write(dir / "dup.jsonl", dup.dump() + "\n" + dup.dump() + "\n");
    CHECK_THROWS_AS(load_sequence(dir / "dup.jsonl", dir.path.string()), IoError);
    auto bow = annotation_to_json(a.frames[0], "");
    bow["left"]["polygon"] = {{0, 0}, {10, 10}, {10, 0}, {0, 10}};
    write(dir / "bow.jsonl", bow.dump() + "\n");
    CHECK_THROWS_AS(load_sequence(dir / "bow.jsonl", dir.path.string()), IoError);
  }
}

TEST_CASE("configuration") {
  TempDir dir("pedfit_io_cfg");
  const RunConfig def;
  write(dir / "empty.json", "{}");
  const RunConfig e = load_run_config(dir / "empty.json");
  CHECK(run_config_to_json(e) == run_config_to_json(def));
  CHECK(e.admm.rho == 2.0);
  CHECK(e.admm.max_iterations == 20);
  CHECK(e.admm.primal_tolerance == 0.05);

  write(dir / "c.json",
        R"({"seed": 9, "weights": {"lidar": 50}, "admm": {"rho": 3}, "pose_prior": "p.json",
            "scene": {"noise_px": 2, "occlusion": "legs"}})");
  const RunConfig c = load_run_config(dir / "c.json");
  CHECK(c.seed == 9);
  CHECK(c.weights.lidar == 50.0);
  CHECK(c.weights.joints == def.weights.joints);
  CHECK(c.admm.rho == 3.0);
  CHECK(c.pose_prior_path == dir / "p.json");
  CHECK(c.scene.occlusion == "legs");
  // serialized form reloads to the same configuration
  const RunConfig again = run_config_from_json(run_config_to_json(c), dir.path.string());
  CHECK(run_config_to_json(again) == run_config_to_json(c));

  write(dir / "unknown.json", R"({"weights": {"liddar": 1}})");
  CHECK_THROWS_AS(load_run_config(dir / "unknown.json"), IoError);
  write(dir / "neg.json", R"({"weights": {"lidar": -1}})");
  CHECK_THROWS(load_run_config(dir / "neg.json"));
  write(dir / "rho.json", R"({"admm": {"rho": 0}})");
  CHECK_THROWS(load_run_config(dir / "rho.json"));
  write(dir / "type.json", R"({"seed": "x"})");
  CHECK_THROWS_AS(load_run_config(dir / "type.json"), IoError);
  write(dir / "broken.json", "{");
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), IoError);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), IoError);
}

TEST_CASE("rig, template, motion, joints, disparity and fit records round-trip") {
  TempDir dir("pedfit_io_rt");
  StereoRig rig = default_rig();
  rig.focal = 1234.5678901234567;
  rig.lidar_to_cam.translation = Vec3(0.1, -0.2, 1.0 / 3.0);
  save_rig(dir / "rig.json", rig);
  const StereoRig r = load_rig(dir / "rig.json");
  CHECK(r.focal == rig.focal);
  CHECK(r.lidar_to_cam.translation == rig.lidar_to_cam.translation);
  CHECK(r.cam_to_global.rotation == rig.cam_to_global.rotation);

  const SkeletonTemplate tmpl = default_template();
  save_template(dir / "t.json", tmpl);
  const SkeletonTemplate t = load_template(dir / "t.json");
  CHECK(t.joints == tmpl.joints);
  CHECK(t.shape_basis == tmpl.shape_basis);
  CHECK(t.bone_radius == tmpl.bone_radius);

  const auto walk = gen_walk_sequence(tmpl, 4, 1.2, Vec3::UnitX(), Vec3(0, 1, 15), 3);
  save_motion(dir / "m.csv", walk);
  const WalkSequence m = load_motion(dir / "m.csv");
  CHECK(m.timestamps == walk.timestamps);
  for (int k = 0; k < 4; ++k) CHECK(m.params[k].pack() == walk.params[k].pack());

  std::mt19937_64 rng(2);
  JointSeries s = series_from_params(walk.params, {3, 4, 5, 6}, tmpl);
  s.valid[1][kEvHead] = false;
  save_joint_series(dir / "j.csv", s);
  const JointSeries js = load_joint_series(dir / "j.csv");
  CHECK(js.frame_ids == s.frame_ids);
  CHECK(js.positions == s.positions);
  CHECK(js.valid == s.valid);

  DisparityTable d(2);
  for (int k = 0; k < kNumKeypoints; ++k) {
    d[0][k] = 50.0 + k / 7.0;
    d[1][k] = 49.0 - k / 3.0;
  }
  save_disparity(dir / "d.csv", {0, 1}, d);
  CHECK(load_disparity(dir / "d.csv", {0, 1}) == d);
  CHECK_THROWS(load_disparity(dir / "d.csv", {0, 7}));

  const SceneSpec spec;
  const Scene scene = make_scene(tmpl, default_rig(), spec, 2);
  TrackSequence track{1, scene.frames};
  FitResult res;
  res.params = scene.truth.params;
  res.energies.resize(scene.frames.size());
  save_fit_results(dir / "fit.jsonl", {track}, {res}, tmpl, default_rig());
  const auto recs = load_fit_records(dir / "fit.jsonl");
  REQUIRE(recs.size() == scene.frames.size());
  for (size_t k = 0; k < recs.size(); ++k) {
    CHECK(recs[k].frame_id == int(k));
    CHECK(recs[k].params.pack() == scene.truth.params[k].pack());
  }
}

TEST_CASE("atomic writes leave no temporaries") {
  TempDir dir("pedfit_io_atomic");
  write_file_atomic(dir / "x.txt", "one");
  write_file_atomic(dir / "x.txt", "two");
  CHECK(read_file(dir / "x.txt") == "two");
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) files += e.is_regular_file();
  CHECK(files == 1);
  CHECK_THROWS_AS(read_file(dir / "none.txt"), IoError);
}
