#include "graphloc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "graphloc/errors.hpp"

namespace graphloc {

Pose2 fit_alignment(const std::vector<Vec2>& est,
                    const std::vector<Vec2>& truth) {
  if (est.size() != truth.size() || est.empty()) {
    throw std::invalid_argument("fit_alignment: mismatched point sets");
  }
  Vec2 ce = Vec2::Zero(), ct = Vec2::Zero();
  for (size_t i = 0; i < est.size(); ++i) {
    ce += est[i];
    ct += truth[i];
  }
  ce /= est.size();
  ct /= est.size();
  double sxx = 0, sxy = 0, syx = 0, syy = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    const Vec2 a = est[i] - ce, b = truth[i] - ct;
    sxx += a.x() * b.x();
    sxy += a.x() * b.y();
    syx += a.y() * b.x();
    syy += a.y() * b.y();
  }
  const double yaw = std::atan2(sxy - syx, sxx + syy);
  Pose2 t;
  t.yaw = yaw;
  const Vec2 rce = Vec2(std::cos(yaw) * ce.x() - std::sin(yaw) * ce.y(),
                        std::sin(yaw) * ce.x() + std::cos(yaw) * ce.y());
  t.x = ct.x() - rce.x();
  t.y = ct.y() - rce.y();
  return t;
}

AteReport compute_ate(const Trajectory& estimated, const Trajectory& truth,
                      bool align) {
  if (estimated.samples.empty() || truth.samples.empty()) {
    throw std::runtime_error("compute_ate: empty trajectory");
  }
  // Association window: half the (median) estimated sample period.
  double period = 0.1;
  if (estimated.size() >= 2) {
    std::vector<double> dts;
    for (size_t i = 1; i < estimated.size(); ++i) {
      dts.push_back(estimated.samples[i].first - estimated.samples[i - 1].first);
    }
    std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
    period = dts[dts.size() / 2];
  }
  const double window = period / 2.0;

  std::vector<Vec2> pe, pt;
  size_t cursor = 0;
  for (const auto& [t, pose] : estimated.samples) {
    while (cursor + 1 < truth.size() &&
           std::abs(truth.samples[cursor + 1].first - t) <=
               std::abs(truth.samples[cursor].first - t)) {
      ++cursor;
    }
    if (std::abs(truth.samples[cursor].first - t) > window) continue;
    pe.push_back(pose.translation());
    pt.push_back(truth.samples[cursor].second.translation());
  }
  if (pe.empty()) throw std::runtime_error("compute_ate: no overlapping timestamps");

  if (align) {
    const Pose2 T = fit_alignment(pe, pt);
    for (auto& p : pe) p = transform_point(T, p);
  }

  AteReport report;
  double sum = 0.0, sum_sq = 0.0;
  for (size_t i = 0; i < pe.size(); ++i) {
    const double err = (pe[i] - pt[i]).norm();
    report.per_frame_errors.push_back(err);
    report.max_cm = std::max(report.max_cm, err * 100.0);
    sum += err;
    sum_sq += err * err;
  }
  report.mean_cm = sum / pe.size() * 100.0;
  report.rmse_cm = std::sqrt(sum_sq / pe.size()) * 100.0;
  return report;
}

std::string serialize_trajectory(const Trajectory& traj) {
  std::string out;
  char buf[128];
  for (const auto& [t, pose] : traj.samples) {
    std::snprintf(buf, sizeof(buf), "%.6f %.9f %.9f %.9f\n", t, pose.x, pose.y,
                  pose.yaw);
    out += buf;
  }
  return out;
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << serialize_trajectory(traj);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("trajectory", "cannot open '" + path + "'", 0);
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double t;
    Pose2 pose;
    if (!(ls >> t >> pose.x >> pose.y >> pose.yaw)) {
      throw ParseError("trajectory", "expected 't x y yaw'", line_no);
    }
    pose.yaw = wrap_angle(pose.yaw);
    if (!traj.samples.empty() && t <= traj.samples.back().first) {
      throw ParseError("trajectory", "timestamps not strictly increasing",
                       line_no);
    }
    traj.samples.emplace_back(t, pose);
  }
  return traj;
}

}  // namespace graphloc
