#include "graphloc/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace graphloc {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}
}  // namespace

ConfigMap ConfigMap::from_string(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config", "expected 'key = value'", line_no);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("config", "empty key", line_no);
    if (cfg.entries_.count(key)) {
      throw ParseError("config", "duplicate key '" + key + "'", line_no);
    }
    cfg.entries_[key] = Entry{value, line_no, false};
  }
  return cfg;
}

ConfigMap ConfigMap::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("config", "cannot open '" + path + "'", 0);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

bool ConfigMap::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& dflt) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  it->second.consumed = true;
  return it->second.value;
}

double ConfigMap::get_double(const std::string& key, double dflt) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  it->second.consumed = true;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second.value, &pos);
    if (pos != it->second.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ParseError("config", "bad numeric value for '" + key + "'",
                     it->second.line);
  }
}

int ConfigMap::get_int(const std::string& key, int dflt) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  it->second.consumed = true;
  try {
    size_t pos = 0;
    const int v = std::stoi(it->second.value, &pos);
    if (pos != it->second.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ParseError("config", "bad integer value for '" + key + "'",
                     it->second.line);
  }
}

uint64_t ConfigMap::get_uint64(const std::string& key, uint64_t dflt) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  it->second.consumed = true;
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(it->second.value, &pos);
    if (pos != it->second.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ParseError("config", "bad integer value for '" + key + "'",
                     it->second.line);
  }
}

bool ConfigMap::get_bool(const std::string& key, bool dflt) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  it->second.consumed = true;
  std::string v = it->second.value;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParseError("config", "bad boolean value for '" + key + "'",
                   it->second.line);
}

std::vector<std::pair<std::string, int>> ConfigMap::unconsumed() const {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& [key, entry] : entries_) {
    if (!entry.consumed) out.emplace_back(key, entry.line);
  }
  return out;
}

void ConfigMap::require_all_consumed() const {
  const auto leftovers = unconsumed();
  if (leftovers.empty()) return;
  std::string msg = "unknown key(s):";
  for (const auto& [key, line] : leftovers) {
    msg += " '" + key + "' (line " + std::to_string(line) + ")";
  }
  throw ConfigError(msg);
}

TrackerConfig make_tracker_config(ConfigMap& cfg) {
  TrackerConfig tc;

  tc.sensor.ray_count = cfg.get_int("sensor.ray_count", tc.sensor.ray_count);
  tc.sensor.fov = cfg.get_double("sensor.fov_deg", tc.sensor.fov * 180.0 / kPi) *
                  kPi / 180.0;
  tc.sensor.max_range = cfg.get_double("sensor.max_range", tc.sensor.max_range);
  tc.sensor.min_range = cfg.get_double("sensor.min_range", tc.sensor.min_range);
  if (tc.sensor.ray_count < 1) throw ConfigError("sensor.ray_count must be >= 1");
  if (tc.sensor.min_range < 0 || tc.sensor.min_range >= tc.sensor.max_range) {
    throw ConfigError("require 0 <= sensor.min_range < sensor.max_range");
  }

  tc.graph_k = cfg.get_int("graph.k", tc.graph_k);
  if (tc.graph_k < 1) throw ConfigError("graph.k must be >= 1");

  auto& fe = tc.frontend;
  fe.curvature_window = cfg.get_int("frontend.curvature_window", fe.curvature_window);
  fe.edge_threshold = cfg.get_double("frontend.edge_threshold", fe.edge_threshold);
  fe.max_points = cfg.get_int("frontend.max_points", fe.max_points);
  fe.min_separation_rays =
      cfg.get_int("frontend.min_separation_rays", fe.min_separation_rays);
  fe.sectors = cfg.get_int("frontend.sectors", fe.sectors);
  fe.gap_threshold = cfg.get_double("frontend.gap_threshold", fe.gap_threshold);
  fe.min_line_points = cfg.get_int("frontend.min_line_points", fe.min_line_points);
  fe.max_line_rms = cfg.get_double("frontend.max_line_rms", fe.max_line_rms);
  fe.merge_angle_deg = cfg.get_double("frontend.merge_angle_deg", fe.merge_angle_deg);
  fe.merge_offset = cfg.get_double("frontend.merge_offset", fe.merge_offset);
  fe.merge_gap = cfg.get_double("frontend.merge_gap", fe.merge_gap);
  fe.stable_support = cfg.get_int("frontend.stable_support", fe.stable_support);
  fe.junction_angle_lo_deg =
      cfg.get_double("frontend.junction_angle_lo_deg", fe.junction_angle_lo_deg);
  fe.extension_limit = cfg.get_double("frontend.extension_limit", fe.extension_limit);
  fe.parallel_angle_deg =
      cfg.get_double("frontend.parallel_angle_deg", fe.parallel_angle_deg);
  fe.manhattan_enabled =
      cfg.get_bool("frontend.manhattan_enabled", fe.manhattan_enabled);
  fe.support_distance =
      cfg.get_double("frontend.support_distance", fe.support_distance);
  fe.inferred_weight = cfg.get_double("frontend.inferred_weight", fe.inferred_weight);
  if (fe.sectors < 4) throw ConfigError("frontend.sectors must be >= 4");

  auto& m = tc.match;
  m.beta = cfg.get_double("match.beta", m.beta);
  m.rho = cfg.get_double("match.rho", m.rho);
  m.epsilon = cfg.get_double("match.epsilon", m.epsilon);
  m.total_mass = cfg.get_double("match.total_mass", m.total_mass);
  m.w_theta = cfg.get_double("match.w_theta", m.w_theta);
  m.w_perp = cfg.get_double("match.w_perp", m.w_perp);
  m.w_par = cfg.get_double("match.w_par", m.w_par);
  m.gate_radius = cfg.get_double("match.gate_radius", m.gate_radius);
  m.top_k = cfg.get_int("match.top_k", m.top_k);
  m.sinkhorn_max_iters =
      cfg.get_int("match.sinkhorn_max_iters", m.sinkhorn_max_iters);
  m.outer_max_iters = cfg.get_int("match.outer_max_iters", m.outer_max_iters);
  m.sinkhorn_tol = cfg.get_double("match.sinkhorn_tol", m.sinkhorn_tol);
  m.greedy = cfg.get_bool("match.greedy", m.greedy);
  if (m.rho <= 0 || m.epsilon <= 0) throw ConfigError("match.rho and match.epsilon must be > 0");
  if (m.beta < 0) throw ConfigError("match.beta must be >= 0");
  if (m.top_k < 1) throw ConfigError("match.top_k must be >= 1");

  auto& est = tc.estimator;
  est.tau_lambda_rel = cfg.get_double("est.tau_lambda_rel", est.tau_lambda_rel);
  est.lambda_abs_floor =
      cfg.get_double("est.lambda_abs_floor", est.lambda_abs_floor);
  est.lambda_r = cfg.get_double("est.lambda_r", est.lambda_r);
  est.huber_delta = cfg.get_double("est.huber_delta", est.huber_delta);
  est.rot_scale = cfg.get_double("est.rot_scale", est.rot_scale);
  est.max_gn_iters = cfg.get_int("est.max_gn_iters", est.max_gn_iters);
  est.buffer_capacity = cfg.get_int("est.buffer_capacity", est.buffer_capacity);
  est.step_tol = cfg.get_double("est.step_tol", est.step_tol);
  est.max_step_trans = cfg.get_double("est.max_step_trans", est.max_step_trans);
  est.max_step_rot = cfg.get_double("est.max_step_rot", est.max_step_rot);
  est.delayed_enabled = cfg.get_bool("est.delayed_enabled", est.delayed_enabled);
  est.freeze_plan = cfg.get_bool("est.freeze_plan", est.freeze_plan);
  est.coast_limit = cfg.get_int("est.coast_limit", est.coast_limit);
  if (est.tau_lambda_rel <= 0 || est.tau_lambda_rel >= 1) {
    throw ConfigError("est.tau_lambda_rel must lie in (0, 1)");
  }
  if (est.lambda_r <= 0) throw ConfigError("est.lambda_r must be > 0");
  if (est.rot_scale <= 0) throw ConfigError("est.rot_scale must be > 0");

  return tc;
}

ScenarioParams make_scenario_params(ConfigMap& cfg, std::string& kind) {
  ScenarioParams p;
  kind = cfg.get_string("scenario.kind", "loop");
  p.frames = cfg.get_int("scenario.frames", p.frames);
  p.dt = cfg.get_double("scenario.dt", p.dt);
  p.noise_sigma = cfg.get_double("scenario.noise_sigma", p.noise_sigma);
  p.occluder_count = cfg.get_int("scenario.occluders", p.occluder_count);
  p.removal_fraction =
      cfg.get_double("scenario.removal_fraction", p.removal_fraction);
  p.seed = cfg.get_uint64("scenario.seed", p.seed);
  p.corridor_length = cfg.get_double("scenario.corridor_length", p.corridor_length);
  p.corridor_width = cfg.get_double("scenario.corridor_width", p.corridor_width);
  p.ray_count = cfg.get_int("sensor.ray_count", p.ray_count);
  p.fov = cfg.get_double("sensor.fov_deg", p.fov * 180.0 / kPi) * kPi / 180.0;
  p.max_range = cfg.get_double("sensor.max_range", p.max_range);
  p.min_range = cfg.get_double("sensor.min_range", p.min_range);
  return p;
}

}  // namespace graphloc
