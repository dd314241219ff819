#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphloc/prior_map.hpp"

namespace graphloc {

struct Scan {
  double timestamp = 0.0;        // seconds
  std::vector<double> ranges;    // meters, one per ray
  std::vector<uint8_t> valid;    // 0 = no return within range limits
};

// Moving disc standing in for a pedestrian. The center follows a
// piecewise-linear waypoint path and holds position outside its time span.
struct DiscOccluder {
  std::vector<std::pair<double, Vec2>> waypoints;  // (time, position)
  double radius = 0.35;

  Vec2 position_at(double t) const;
};

struct Scenario {
  PriorMap map;  // observed world (may differ from the tracking prior)
  SensorModel sensor;
  std::vector<std::pair<double, Pose2>> trajectory;  // ground truth
  std::vector<DiscOccluder> occluders;
  double noise_sigma = 0.0;  // meters, std of range noise
  uint64_t rng_seed = 1;
};

// Scenario plus the prior map handed to the tracker. For the parking kind
// with obstacle removal, prior is a superset of the observed world.
struct ScenarioBundle {
  Scenario scenario;
  PriorMap prior;
  std::string kind;
};

struct ScenarioParams {
  int frames = -1;  // -1 = kind default
  double dt = 0.1;
  double noise_sigma = 0.01;
  int occluder_count = 0;
  double removal_fraction = 0.3;  // parking: share of prior obstacles absent
  uint64_t seed = 1;
  int ray_count = 720;
  double fov = 2.0 * 3.14159265358979323846;
  double max_range = -1.0;  // <=0 = kind default
  double min_range = 0.1;
  double corridor_length = 40.0;
  double corridor_width = 4.0;
};

// kind is one of loop | corridor | parking. Throws ConfigError on bad params.
ScenarioBundle generate_scenario(const std::string& kind,
                                 const ScenarioParams& params);

// Per-ray first hit over world segments and disc occluders at the
// ground-truth pose, with seeded Gaussian range noise.
Scan simulate_scan(const Scenario& scenario, int t_index);

// Text record per scan: "scan t r1 ... rN" with -1 for invalid rays.
void save_scans(const std::string& path, const std::vector<Scan>& scans);
std::vector<Scan> load_scans(const std::string& path);
std::string serialize_scans(const std::vector<Scan>& scans);

}  // namespace graphloc
