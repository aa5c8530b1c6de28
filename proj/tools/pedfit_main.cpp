#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pedfit/evaluation.hpp"
#include "pedfit/io.hpp"

namespace fs = std::filesystem;
using namespace pedfit;

namespace {

template <typename... Args>
void progress(const char* fmt, Args... args) {
  std::fprintf(stderr, "pedfit: ");
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  RunConfig load() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.priors.seed = *seed;
    }
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run configuration (JSON)");
  cmd->add_option("--seed", c.seed, "random seed, overrides the configuration");
}

SkeletonTemplate template_for(const RunConfig& cfg) {
  return cfg.template_path.empty() ? default_template(cfg.shape_dim)
                                   : load_template(cfg.template_path);
}

StereoRig rig_for(const RunConfig& cfg, const std::string& override_path) {
  if (!override_path.empty()) return load_rig(override_path);
  return cfg.rig_path.empty() ? default_rig() : load_rig(cfg.rig_path);
}

Priors train_synthetic_priors(const RunConfig& cfg, const SkeletonTemplate& tmpl) {
  progress("training priors on %d synthetic walks of %d frames", cfg.prior_sequences,
           cfg.prior_frames);
  const auto corpus =
      walk_corpus(tmpl, cfg.prior_sequences, cfg.prior_frames, cfg.prior_frame_interval, cfg.seed);
  std::vector<std::vector<BodyParams>> seqs;
  std::vector<std::vector<double>> times;
  for (const auto& w : corpus) {
    seqs.push_back(w.params);
    times.push_back(w.timestamps);
  }
  return train_motion_priors(seqs, times, cfg.priors);
}

Priors priors_for(const RunConfig& cfg, const std::string& pose_path,
                  const std::string& temporal_path, const SkeletonTemplate& tmpl,
                  bool train_if_missing) {
  const std::string pose = pose_path.empty() ? cfg.pose_prior_path : pose_path;
  const std::string temporal = temporal_path.empty() ? cfg.temporal_prior_path : temporal_path;
  if (pose.empty() && temporal.empty() && train_if_missing) return train_synthetic_priors(cfg, tmpl);
  if (pose.empty()) throw IoError("no pose prior: pass --pose-prior or set pose_prior in the config");
  if (temporal.empty())
    throw IoError("no temporal prior: pass --temporal-prior or set temporal_prior in the config");
  return Priors{load_gmm(pose), load_gmm(temporal)};
}

std::vector<int> frame_ids_of(const std::vector<FrameObservation>& frames) {
  std::vector<int> ids;
  for (const auto& f : frames) ids.push_back(f.frame_id);
  return ids;
}

std::string track_file(const std::string& dir, int track, const std::string& name) {
  return (fs::path(dir) / ("track" + std::to_string(track) + "_" + name)).string();
}

// ------------------------------------------------------------------ commands

struct SynthArgs {
  Common common;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  const RunConfig cfg = a.common.load();
  const SkeletonTemplate tmpl = template_for(cfg);
  const StereoRig rig = rig_for(cfg, "");
  for (int s = 0; s < cfg.scenes; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d", s);
    const fs::path dir = fs::path(a.out) / name;
    progress("synth %s (%d frames at %g m)", name, cfg.scene.n_frames, cfg.scene.distance);
    const Scene sc = make_scene(tmpl, rig, cfg.scene, cfg.seed + static_cast<std::uint64_t>(s));
    const std::vector<int> ids = frame_ids_of(sc.frames);
    save_annotations((dir / "annotations.jsonl").string(), (dir / "clouds").string(), sc.frames);
    save_rig((dir / "rig.json").string(), rig);
    save_motion((dir / "truth_motion.csv").string(), sc.truth);
    save_joint_series((dir / "truth_joints.csv").string(),
                      series_from_params(sc.truth.params, ids, tmpl));
    save_disparity((dir / "disparity.csv").string(), ids, sc.disparity);
  }
}

struct TrainArgs {
  Common common;
  std::vector<std::string> motion;
  std::string pose_out;
  std::string temporal_out;
};

void run_train_prior(const TrainArgs& a) {
  const RunConfig cfg = a.common.load();
  Priors pr;
  if (a.motion.empty()) {
    pr = train_synthetic_priors(cfg, template_for(cfg));
  } else {
    std::vector<std::vector<BodyParams>> seqs;
    std::vector<std::vector<double>> times;
    for (const auto& path : a.motion) {
      WalkSequence w = load_motion(path);
      seqs.push_back(std::move(w.params));
      times.push_back(std::move(w.timestamps));
    }
    progress("training priors on %zu motion files", a.motion.size());
    pr = train_motion_priors(seqs, times, cfg.priors);
  }
  save_gmm(a.pose_out, pr.pose);
  save_gmm(a.temporal_out, pr.temporal);
}

struct FitArgs {
  Common common;
  std::string annotations;
  std::string clouds;
  std::string rig;
  std::string pose_prior;
  std::string temporal_prior;
  std::string out;
};

void run_fit(const FitArgs& a) {
  const RunConfig cfg = a.common.load();
  const SkeletonTemplate tmpl = template_for(cfg);
  const StereoRig rig = rig_for(cfg, a.rig);
  const Priors pr = priors_for(cfg, a.pose_prior, a.temporal_prior, tmpl, false);
  const auto tracks = load_sequence(a.annotations, a.clouds);
  std::vector<FitResult> results;
  for (const auto& t : tracks) {
    progress("fit track %d (%zu frames)", t.track_id, t.frames.size());
    FitResult r = fit_sequence(t.frames, rig, tmpl, pr, cfg.weights, cfg.admm, cfg.solver);
    progress("track %d: %s after %d ADMM iterations", t.track_id,
             std::string(to_string(r.status)).c_str(), r.admm_iterations);
    save_joint_series(track_file(a.out, t.track_id, "joints.csv"),
                      series_from_params(r.params, frame_ids_of(t.frames), tmpl));
    results.push_back(std::move(r));
  }
  save_fit_results((fs::path(a.out) / "fit.jsonl").string(), tracks, results, tmpl, rig);
}

struct EvalArgs {
  Common common;
  std::string pred;
  std::string gt;
  std::string name = "pred";
  std::string out;
};

void run_eval(const EvalArgs& a) {
  a.common.load();  // validates the configuration when one is given
  const JointSeries pred = load_joint_series(a.pred);
  const JointSeries gt = load_joint_series(a.gt);
  const Mpjpe g = mpjpe_global(pred, gt);
  const Mpjpe r = mpjpe_relative(pred, gt);
  progress("%s: global %.1f mm, root-relative %.1f mm", a.name.c_str(), g.mean_mm(), r.mean_mm());
  save_metrics_csv(a.out, {{a.name + "_global", g}, {a.name + "_relative", r}});
}

struct AblateArgs {
  Common common;
  std::string pose_prior;
  std::string temporal_prior;
  std::string out;
};

void run_ablate(const AblateArgs& a) {
  const RunConfig cfg = a.common.load();
  const SkeletonTemplate tmpl = template_for(cfg);
  const StereoRig rig = rig_for(cfg, "");
  const Priors pr = priors_for(cfg, a.pose_prior, a.temporal_prior, tmpl, true);
  std::vector<AblationInput> inputs;
  for (int s = 0; s < cfg.scenes; ++s) {
    const Scene sc = make_scene(tmpl, rig, cfg.scene, cfg.seed + static_cast<std::uint64_t>(s));
    inputs.push_back({sc.frames, series_from_params(sc.truth.params, frame_ids_of(sc.frames), tmpl)});
  }
  progress("ablation over %d scenes, 6 term subsets", cfg.scenes);
  const auto rows = run_ablation(inputs, rig, tmpl, pr, cfg.weights, standard_ablation_rows(),
                                 cfg.admm, cfg.solver);
  for (const auto& r : rows)
    progress("row %d: relative %.1f mm, global %.1f mm", r.row.index, r.relative.mean_mm(),
             r.global.mean_mm());
  save_ablation_csv(a.out, rows);
}

struct BaselineArgs {
  Common common;
  std::string annotations;
  std::string clouds;
  std::string disparity;
  std::string rig;
  std::string pose_prior;
  std::string temporal_prior;
  std::string gt;
  std::string out;
};

void run_baselines(const BaselineArgs& a) {
  const RunConfig cfg = a.common.load();
  const SkeletonTemplate tmpl = template_for(cfg);
  const StereoRig rig = rig_for(cfg, a.rig);
  const auto tracks = load_sequence(a.annotations, a.clouds);
  if (tracks.size() != 1)
    throw IoError(a.annotations + ": baselines expect exactly one track, found " +
                  std::to_string(tracks.size()));
  const auto& frames = tracks.front().frames;
  const int track = tracks.front().track_id;
  const std::vector<int> ids = frame_ids_of(frames);
  const DisparityTable disp = load_disparity(a.disparity, ids);
  const Priors pr = priors_for(cfg, a.pose_prior, a.temporal_prior, tmpl, false);

  progress("baselines for track %d (%zu frames)", track, frames.size());
  const std::vector<std::pair<std::string, JointSeries>> series = {
      {"triangulation", baseline_triangulation(frames, rig)},
      {"left_disp", baseline_left_disp(frames, rig, disp)},
      {"monofit_disp", baseline_monofit_disp(frames, rig, tmpl, pr, cfg.weights, disp)},
  };
  for (const auto& [name, s] : series) save_joint_series(track_file(a.out, track, name + ".csv"), s);
  if (!a.gt.empty()) {
    const JointSeries gt = load_joint_series(a.gt);
    std::vector<MetricRow> rows;
    for (const auto& [name, s] : series) rows.push_back({name, mpjpe_global(s, gt)});
    save_metrics_csv(track_file(a.out, track, "baseline_metrics.csv"), rows);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian body fitting from stereo keypoints and LiDAR"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate synthetic scenes");
  add_common(c_synth, synth.common);
  c_synth->add_option("--out", synth.out, "output directory")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train-prior", "train pose and temporal priors");
  add_common(c_train, train.common);
  c_train->add_option("--motion", train.motion, "motion CSV files (default: synthetic walks)");
  c_train->add_option("--pose-out", train.pose_out, "pose prior output")->required();
  c_train->add_option("--temporal-out", train.temporal_out, "temporal prior output")->required();

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "fit the body model to annotated sequences");
  add_common(c_fit, fit.common);
  c_fit->add_option("--annotations", fit.annotations, "annotation JSONL")->required();
  c_fit->add_option("--clouds", fit.clouds, "point cloud directory")->required();
  c_fit->add_option("--rig", fit.rig, "stereo rig (overrides the configuration)");
  c_fit->add_option("--pose-prior", fit.pose_prior, "pose prior JSON");
  c_fit->add_option("--temporal-prior", fit.temporal_prior, "temporal prior JSON");
  c_fit->add_option("--out", fit.out, "output directory")->required();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "MPJPE of predicted joints against ground truth");
  add_common(c_eval, eval.common);
  c_eval->add_option("--pred", eval.pred, "predicted joint CSV")->required();
  c_eval->add_option("--gt", eval.gt, "ground-truth joint CSV")->required();
  c_eval->add_option("--name", eval.name, "method label in the output");
  c_eval->add_option("--out", eval.out, "metric CSV")->required();

  AblateArgs ablate;
  auto* c_ablate = app.add_subcommand("ablate", "energy-term ablation on synthetic scenes");
  add_common(c_ablate, ablate.common);
  c_ablate->add_option("--pose-prior", ablate.pose_prior, "pose prior JSON");
  c_ablate->add_option("--temporal-prior", ablate.temporal_prior, "temporal prior JSON");
  c_ablate->add_option("--out", ablate.out, "ablation CSV")->required();

  BaselineArgs base;
  auto* c_base = app.add_subcommand("baselines", "triangulation, left+disparity, monofit+disparity");
  add_common(c_base, base.common);
  c_base->add_option("--annotations", base.annotations, "annotation JSONL")->required();
  c_base->add_option("--clouds", base.clouds, "point cloud directory")->required();
  c_base->add_option("--disparity", base.disparity, "disparity CSV")->required();
  c_base->add_option("--rig", base.rig, "stereo rig (overrides the configuration)");
  c_base->add_option("--pose-prior", base.pose_prior, "pose prior JSON");
  c_base->add_option("--temporal-prior", base.temporal_prior, "temporal prior JSON");
  c_base->add_option("--gt", base.gt, "ground-truth joint CSV for metrics");
  c_base->add_option("--out", base.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "pedfit: error: %s\n", e.what());
    return 2;
  }

  try {
    if (c_synth->parsed()) run_synth(synth);
    else if (c_train->parsed()) run_train_prior(train);
    else if (c_fit->parsed()) run_fit(fit);
    else if (c_eval->parsed()) run_eval(eval);
    else if (c_ablate->parsed()) run_ablate(ablate);
    else if (c_base->parsed()) run_baselines(base);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::fprintf(stderr, "pedfit: error: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
