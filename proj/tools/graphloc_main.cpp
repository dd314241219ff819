// graphloc: scan simulation, map-based pose tracking, and ATE evaluation
// on plain-text maps, scans, and trajectories.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "graphloc/config.hpp"
#include "graphloc/estimator.hpp"
#include "graphloc/scan_sim.hpp"
#include "graphloc/trajectory.hpp"

namespace fs = std::filesystem;
using namespace graphloc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 2;
constexpr int kExitTrackingLost = 3;

Pose2 parse_seed_pose(const std::string& text) {
  std::string s = text;
  for (char& c : s) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(s);
  Pose2 p;
  if (!(in >> p.x >> p.y >> p.yaw)) {
    throw ConfigError("seed pose must be 'x y yaw' or 'x,y,yaw'");
  }
  std::string rest;
  if (in >> rest) throw ConfigError("seed pose has trailing tokens");
  p.yaw = wrap_angle(p.yaw);
  return p;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << content;
}

std::string format_report(const AteReport& r, int frames, int coast, int lost) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "max_cm %.4f\nmean_cm %.4f\nrmse_cm %.4f\nframes %d\ncoast "
                "%d\nlost %d\n",
                r.max_cm, r.mean_cm, r.rmse_cm, frames, coast, lost);
  return buf;
}

struct TrackOutput {
  Trajectory trajectory;
  std::string diagnostics;
  int coast_frames = 0;
  int lost_frames = 0;
};

TrackOutput run_tracking(const MapModel& model, const TrackerConfig& cfg,
                         const std::vector<Scan>& scans, const Pose2& seed_prev2,
                         const Pose2& seed_prev) {
  Tracker tracker(&model, cfg, seed_prev2, seed_prev);
  TrackOutput out;
  for (const Scan& scan : scans) {
    const auto [pose, diag] = tracker.track_step(scan);
    out.trajectory.samples.emplace_back(scan.timestamp, pose);
    out.diagnostics += serialize_diagnostics(pose, diag);
    out.coast_frames += diag.status == TrackStatus::coast;
    out.lost_frames += diag.status == TrackStatus::lost;
  }
  return out;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  ConfigMap cfg = ConfigMap::from_file(config_path);
  std::string kind;
  const ScenarioParams params = make_scenario_params(cfg, kind);
  cfg.require_all_consumed();
  const ScenarioBundle bundle = generate_scenario(kind, params);

  fs::create_directories(out_dir);
  save_map(bundle.prior, out_dir + "/map.txt");
  if (bundle.prior.polylines.size() != bundle.scenario.map.polylines.size()) {
    save_map(bundle.scenario.map, out_dir + "/world.txt");
  }

  std::vector<Scan> scans;
  scans.reserve(bundle.scenario.trajectory.size());
  Trajectory truth;
  for (size_t k = 0; k < bundle.scenario.trajectory.size(); ++k) {
    scans.push_back(simulate_scan(bundle.scenario, static_cast<int>(k)));
    truth.samples.push_back(bundle.scenario.trajectory[k]);
  }
  save_scans(out_dir + "/scans.txt", scans);
  save_trajectory(out_dir + "/truth.txt", truth);
  std::printf("simulate: %zu scans, map %s/map.txt\n", scans.size(),
              out_dir.c_str());
  return kExitOk;
}

int cmd_track(const std::string& map_path, const std::string& scans_path,
              const std::string& config_path,
              const std::vector<std::string>& seed_texts,
              const std::string& out_path, const std::string& diag_path) {
  TrackerConfig tc;
  if (!config_path.empty()) {
    ConfigMap cfg = ConfigMap::from_file(config_path);
    tc = make_tracker_config(cfg);
    cfg.require_all_consumed();
  }
  const PriorMap map = load_map(map_path);
  const MapModel model = build_map_model(map, tc.graph_k);
  const std::vector<Scan> scans = load_scans(scans_path);
  if (scans.empty()) throw ConfigError("no scans in '" + scans_path + "'");
  if (static_cast<int>(scans[0].ranges.size()) != tc.sensor.ray_count) {
    throw ConfigError("scan ray count " +
                      std::to_string(scans[0].ranges.size()) +
                      " does not match sensor.ray_count " +
                      std::to_string(tc.sensor.ray_count));
  }
  if (seed_texts.empty() || seed_texts.size() > 2) {
    throw ConfigError("provide --seed-pose once or twice");
  }
  const Pose2 seed_prev = parse_seed_pose(seed_texts.back());
  const Pose2 seed_prev2 =
      seed_texts.size() == 2 ? parse_seed_pose(seed_texts.front()) : seed_prev;

  const TrackOutput out =
      run_tracking(model, tc, scans, seed_prev2, seed_prev);
  save_trajectory(out_path, out.trajectory);
  if (!diag_path.empty()) write_file(diag_path, out.diagnostics);
  std::printf("track: %zu frames, %d coast, %d lost -> %s\n",
              out.trajectory.size(), out.coast_frames, out.lost_frames,
              out_path.c_str());
  return out.lost_frames > 0 ? kExitTrackingLost : kExitOk;
}

int cmd_eval(const std::string& est_path, const std::string& truth_path,
             bool align, const std::string& out_path) {
  const Trajectory est = load_trajectory(est_path);
  const Trajectory truth = load_trajectory(truth_path);
  const AteReport report = compute_ate(est, truth, align);
  const std::string text = format_report(
      report, static_cast<int>(report.per_frame_errors.size()), 0, 0);
  std::fputs(text.c_str(), stdout);
  if (!out_path.empty()) write_file(out_path, text);
  return kExitOk;
}

int cmd_demo(const std::string& kind, uint64_t seed, int frames, int occluders,
             double noise_sigma, double removal_fraction,
             const std::string& config_path, bool greedy, bool no_delayed,
             const std::string& out_dir) {
  ScenarioParams params;
  params.seed = seed;
  if (frames > 0) params.frames = frames;
  params.occluder_count = occluders;
  if (noise_sigma >= 0) params.noise_sigma = noise_sigma;
  if (removal_fraction >= 0) params.removal_fraction = removal_fraction;

  TrackerConfig tc;
  if (!config_path.empty()) {
    ConfigMap cfg = ConfigMap::from_file(config_path);
    std::string ignored_kind;
    make_scenario_params(cfg, ignored_kind);  // allow shared files
    tc = make_tracker_config(cfg);
    cfg.require_all_consumed();
  }
  const ScenarioBundle bundle = generate_scenario(kind, params);
  tc.sensor = bundle.scenario.sensor;
  if (kind == "corridor") tc.frontend.manhattan_enabled = true;
  if (greedy) tc.match.greedy = true;
  if (no_delayed) tc.estimator.delayed_enabled = false;

  const MapModel model = build_map_model(bundle.prior, tc.graph_k);
  std::vector<Scan> scans;
  Trajectory truth;
  for (size_t k = 0; k < bundle.scenario.trajectory.size(); ++k) {
    scans.push_back(simulate_scan(bundle.scenario, static_cast<int>(k)));
    truth.samples.push_back(bundle.scenario.trajectory[k]);
  }

  const Pose2 seed_pose = truth.samples.front().second;
  const TrackOutput out = run_tracking(model, tc, scans, seed_pose, seed_pose);
  const AteReport report = compute_ate(out.trajectory, truth);

  fs::create_directories(out_dir);
  save_map(bundle.prior, out_dir + "/map.txt");
  save_trajectory(out_dir + "/truth.txt", truth);
  save_trajectory(out_dir + "/est.txt", out.trajectory);
  write_file(out_dir + "/diag.txt", out.diagnostics);
  const std::string text =
      format_report(report, static_cast<int>(out.trajectory.size()),
                    out.coast_frames, out.lost_frames);
  write_file(out_dir + "/report.txt", text);
  std::fputs(text.c_str(), stdout);
  return out.lost_frames > 0 ? kExitTrackingLost : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphloc: pose tracking against compact structural maps"};
  app.require_subcommand(1);

  std::string config_path, out_path, map_path, scans_path;
  std::string est_path, truth_path, diag_path;
  std::vector<std::string> seed_poses;
  bool align = false, greedy = false, no_delayed = false;
  uint64_t seed = 1;
  int frames = -1, occluders = 0;
  double noise_sigma = -1.0, removal = -1.0;
  std::string demo_kind;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic scenario");
  sim->add_option("--config", config_path, "scenario config file")->required();
  sim->add_option("--out", out_path, "output directory")->required();

  auto* trk = app.add_subcommand("track", "track scans against a prior map");
  trk->add_option("--map", map_path, "prior map file")->required();
  trk->add_option("--scans", scans_path, "scan file")->required();
  trk->add_option("--config", config_path, "pipeline config file");
  trk->add_option("--seed-pose", seed_poses,
                  "seed pose 'x y yaw' (repeat for P_{t-2}, P_{t-1})")
      ->required();
  trk->add_option("--out", out_path, "output trajectory file")->required();
  trk->add_option("--diag", diag_path, "per-frame diagnostics file");

  auto* evl = app.add_subcommand("eval", "absolute trajectory error");
  evl->add_option("--est", est_path, "estimated trajectory")->required();
  evl->add_option("--truth", truth_path, "ground-truth trajectory")->required();
  evl->add_flag("--align", align, "rigid alignment before the error");
  evl->add_option("--out", out_path, "report file");

  auto* dem = app.add_subcommand("demo", "generate + track + eval in one shot");
  dem->add_option("kind", demo_kind, "loop | corridor | parking")->required();
  dem->add_option("--seed", seed, "scenario seed");
  dem->add_option("--frames", frames, "frame count override");
  dem->add_option("--occluders", occluders, "moving disc count");
  dem->add_option("--noise-sigma", noise_sigma, "range noise sigma [m]");
  dem->add_option("--removal-fraction", removal,
                  "parking: prior obstacles absent from the world");
  dem->add_option("--config", config_path, "pipeline config file");
  dem->add_flag("--greedy", greedy, "nearest-neighbor association ablation");
  dem->add_flag("--no-delayed", no_delayed, "disable delayed optimization");
  dem->add_option("--out", out_path, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(config_path, out_path);
    if (trk->parsed()) {
      return cmd_track(map_path, scans_path, config_path, seed_poses, out_path,
                       diag_path);
    }
    if (evl->parsed()) return cmd_eval(est_path, truth_path, align, out_path);
    if (dem->parsed()) {
      return cmd_demo(demo_kind, seed, frames, occluders, noise_sigma, removal,
                      config_path, greedy, no_delayed, out_path);
    }
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInputError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInputError;
  }
  return kExitInputError;
}
