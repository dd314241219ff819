#pragma once

#include <string>
#include <vector>

#include "graphloc/geometry.hpp"

namespace graphloc {

struct Trajectory {
  std::vector<std::pair<double, Pose2>> samples;  // strictly increasing t

  size_t size() const { return samples.size(); }
};

struct AteReport {
  double max_cm = 0.0;
  double mean_cm = 0.0;
  double rmse_cm = 0.0;
  std::vector<double> per_frame_errors;  // meters
};

// Absolute trajectory error with nearest-timestamp association (within half
// a scan period). No alignment by default: localization is map-framed.
// Throws std::runtime_error when no timestamps associate.
AteReport compute_ate(const Trajectory& estimated, const Trajectory& truth,
                      bool align = false);

// Best-fit rigid transform (rotation + translation, no scale) mapping the
// estimated positions onto the paired truth positions.
Pose2 fit_alignment(const std::vector<Vec2>& est, const std::vector<Vec2>& truth);

// "t x y yaw" per line.
void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);
std::string serialize_trajectory(const Trajectory& traj);

}  // namespace graphloc
