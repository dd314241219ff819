#include "graphloc/scan_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "graphloc/errors.hpp"

namespace graphloc {

namespace {
constexpr double kPi = 3.14159265358979323846;

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

// Near intersection of a ray with a disc, or +inf.
double ray_disc_distance(const Vec2& origin, const Vec2& dir, const Vec2& center,
                         double radius) {
  const Vec2 m = center - origin;
  const double b = m.dot(dir);
  const double disc = radius * radius - (m.squaredNorm() - b * b);
  if (disc < 0.0) return std::numeric_limits<double>::infinity();
  const double t = b - std::sqrt(disc);
  return t >= 0.0 ? t : std::numeric_limits<double>::infinity();
}

void append_rect(PriorMap& map, const Vec2& lo, const Vec2& hi) {
  map.polylines.push_back(
      {lo, Vec2(hi.x(), lo.y()), hi, Vec2(lo.x(), hi.y())});
  map.closed_flags.push_back(true);
}
}  // namespace

Vec2 DiscOccluder::position_at(double t) const {
  if (waypoints.empty()) return Vec2::Zero();
  if (t <= waypoints.front().first) return waypoints.front().second;
  if (t >= waypoints.back().first) return waypoints.back().second;
  for (size_t i = 1; i < waypoints.size(); ++i) {
    if (t <= waypoints[i].first) {
      const auto& [t0, p0] = waypoints[i - 1];
      const auto& [t1, p1] = waypoints[i];
      const double a = (t - t0) / (t1 - t0);
      return (1.0 - a) * p0 + a * p1;
    }
  }
  return waypoints.back().second;
}

Scan simulate_scan(const Scenario& scenario, int t_index) {
  if (t_index < 0 || t_index >= static_cast<int>(scenario.trajectory.size())) {
    throw std::out_of_range("simulate_scan: bad frame index");
  }
  const auto& [stamp, pose] = scenario.trajectory[t_index];
  const auto& sensor = scenario.sensor;
  const auto segments = enumerate_segments(scenario.map);

  // Disc positions at this stamp; discs overlapping the sensor dead zone are
  // skipped (a pedestrian cannot occupy the sensor location).
  std::vector<Vec2> disc_centers;
  std::vector<double> disc_radii;
  const Vec2 origin = pose.translation();
  for (const auto& occ : scenario.occluders) {
    const Vec2 c = occ.position_at(stamp);
    if ((c - origin).norm() < occ.radius + sensor.min_range + 0.05) continue;
    disc_centers.push_back(c);
    disc_radii.push_back(occ.radius);
  }

  Scan scan;
  scan.timestamp = stamp;
  scan.ranges.assign(sensor.ray_count, 0.0);
  scan.valid.assign(sensor.ray_count, 0);

  std::mt19937_64 rng(mix_seed(scenario.rng_seed, t_index));
  std::normal_distribution<double> noise(0.0, 1.0);

  for (int i = 0; i < sensor.ray_count; ++i) {
    const double ang = pose.yaw + sensor.azimuth(i);
    const Vec2 dir(std::cos(ang), std::sin(ang));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& seg : segments) {
      const auto t = ray_segment_intersect(origin, dir, seg.a, seg.b);
      if (t && *t < best) best = *t;
    }
    for (size_t d = 0; d < disc_centers.size(); ++d) {
      best = std::min(best,
                      ray_disc_distance(origin, dir, disc_centers[d], disc_radii[d]));
    }
    if (best < sensor.min_range || best > sensor.max_range) continue;
    double r = best;
    if (scenario.noise_sigma > 0.0) {
      r += scenario.noise_sigma * noise(rng);
      r = std::clamp(r, sensor.min_range, sensor.max_range);
    }
    scan.ranges[i] = r;
    scan.valid[i] = 1;
  }
  return scan;
}

namespace {

std::vector<DiscOccluder> make_occluders(int count, const Aabb& bounds,
                                         double duration, uint64_t seed) {
  std::vector<DiscOccluder> occs;
  std::mt19937_64 rng(mix_seed(seed, 0x0cc1));
  std::uniform_real_distribution<double> ux(bounds.min.x() + 1.5,
                                            bounds.max.x() - 1.5);
  std::uniform_real_distribution<double> uy(bounds.min.y() + 1.5,
                                            bounds.max.y() - 1.5);
  std::uniform_real_distribution<double> uspeed(0.9, 1.6);
  for (int i = 0; i < count; ++i) {
    DiscOccluder occ;
    occ.radius = 0.35;
    double t = 0.0;
    Vec2 p(ux(rng), uy(rng));
    occ.waypoints.emplace_back(t, p);
    const double speed = uspeed(rng);
    while (t < duration + 1.0) {
      const Vec2 target(ux(rng), uy(rng));
      const double dist = (target - p).norm();
      if (dist < 1.0) continue;
      t += dist / speed;
      p = target;
      occ.waypoints.emplace_back(t, p);
    }
    occs.push_back(std::move(occ));
  }
  return occs;
}

ScenarioBundle make_loop(const ScenarioParams& p) {
  const double W = 50.0, H = 30.0;
  PriorMap map;
  append_rect(map, Vec2(0, 0), Vec2(W, H));
  append_rect(map, Vec2(22, 13), Vec2(28, 17));  // center block
  append_rect(map, Vec2(4, 4), Vec2(6, 6));
  append_rect(map, Vec2(44, 4), Vec2(46, 6));
  append_rect(map, Vec2(4, 24), Vec2(6, 26));
  append_rect(map, Vec2(44, 24), Vec2(46, 26));
  finalize_prior_map(map);

  ScenarioBundle bundle;
  bundle.kind = "loop";
  bundle.prior = map;
  bundle.scenario.map = map;
  bundle.scenario.noise_sigma = p.noise_sigma;
  bundle.scenario.rng_seed = p.seed;
  bundle.scenario.sensor.ray_count = p.ray_count;
  bundle.scenario.sensor.fov = p.fov;
  bundle.scenario.sensor.min_range = p.min_range;
  bundle.scenario.sensor.max_range = p.max_range > 0 ? p.max_range : 30.0;

  const int frames = p.frames > 0 ? p.frames : 1000;
  const double a = 16.0, b = 8.5, cx = 25.0, cy = 15.0;
  for (int k = 0; k < frames; ++k) {
    const double th = 2.0 * kPi * k / (frames - 1);
    Pose2 pose;
    pose.x = cx + a * std::cos(th);
    pose.y = cy + b * std::sin(th);
    pose.yaw = std::atan2(b * std::cos(th), -a * std::sin(th));
    bundle.scenario.trajectory.emplace_back(k * p.dt, pose);
  }
  bundle.scenario.occluders = make_occluders(
      p.occluder_count, map.bounds, frames * p.dt, p.seed);
  return bundle;
}

ScenarioBundle make_corridor(const ScenarioParams& p) {
  const double L = p.corridor_length, W = p.corridor_width;
  if (L < 16.0 || W < 1.0) throw ConfigError("corridor dimensions too small");
  PriorMap map;
  append_rect(map, Vec2(0, 0), Vec2(L, W));
  finalize_prior_map(map);

  ScenarioBundle bundle;
  bundle.kind = "corridor";
  bundle.prior = map;
  bundle.scenario.map = map;
  bundle.scenario.noise_sigma = p.noise_sigma;
  bundle.scenario.rng_seed = p.seed;
  bundle.scenario.sensor.ray_count = p.ray_count;
  bundle.scenario.sensor.fov = p.fov;
  bundle.scenario.sensor.min_range = p.min_range;
  bundle.scenario.sensor.max_range = p.max_range > 0 ? p.max_range : 12.0;

  const int frames = p.frames > 0 ? p.frames : 320;
  const double x0 = 4.0, x1 = L - 4.0, y = W / 2.0;
  for (int k = 0; k < frames; ++k) {
    Pose2 pose;
    pose.x = x0 + (x1 - x0) * k / (frames - 1);
    pose.y = y;
    pose.yaw = 0.0;
    bundle.scenario.trajectory.emplace_back(k * p.dt, pose);
  }
  bundle.scenario.occluders = make_occluders(
      p.occluder_count, map.bounds, frames * p.dt, p.seed);
  return bundle;
}

// Arc-length parametrized rounded rectangle, counterclockwise.
struct RoundedRect {
  double x0, y0, x1, y1, r;

  struct Piece {
    bool arc;
    Vec2 a, b;      // straight endpoints
    Vec2 center;    // arc center
    double ang0, ang1;
    double len;
  };
  std::vector<Piece> pieces;
  double total = 0.0;

  RoundedRect(double x0_, double y0_, double x1_, double y1_, double r_)
      : x0(x0_), y0(y0_), x1(x1_), y1(y1_), r(r_) {
    auto straight = [&](Vec2 a, Vec2 b) {
      pieces.push_back({false, a, b, Vec2::Zero(), 0, 0, (b - a).norm()});
    };
    auto arc = [&](Vec2 c, double a0, double a1) {
      pieces.push_back({true, Vec2::Zero(), Vec2::Zero(), c, a0, a1,
                        r * std::abs(a1 - a0)});
    };
    straight(Vec2(x0 + r, y0), Vec2(x1 - r, y0));
    arc(Vec2(x1 - r, y0 + r), -kPi / 2, 0.0);
    straight(Vec2(x1, y0 + r), Vec2(x1, y1 - r));
    arc(Vec2(x1 - r, y1 - r), 0.0, kPi / 2);
    straight(Vec2(x1 - r, y1), Vec2(x0 + r, y1));
    arc(Vec2(x0 + r, y1 - r), kPi / 2, kPi);
    straight(Vec2(x0, y1 - r), Vec2(x0, y0 + r));
    arc(Vec2(x0 + r, y0 + r), kPi, 3 * kPi / 2);
    for (const auto& pc : pieces) total += pc.len;
  }

  Pose2 at(double s) const {
    s = std::fmod(s, total);
    if (s < 0) s += total;
    for (const auto& pc : pieces) {
      if (s > pc.len) {
        s -= pc.len;
        continue;
      }
      Pose2 pose;
      if (!pc.arc) {
        const Vec2 d = (pc.b - pc.a).normalized();
        const Vec2 pos = pc.a + s * d;
        pose.x = pos.x();
        pose.y = pos.y();
        pose.yaw = std::atan2(d.y(), d.x());
      } else {
        const double ang = pc.ang0 + s / pc.len * (pc.ang1 - pc.ang0);
        pose.x = pc.center.x() + r * std::cos(ang);
        pose.y = pc.center.y() + r * std::sin(ang);
        pose.yaw = wrap_angle(ang + kPi / 2);  // CCW tangent
      }
      return pose;
    }
    return at(0.0);
  }
};

ScenarioBundle make_parking(const ScenarioParams& p) {
  if (p.removal_fraction < 0.0 || p.removal_fraction > 0.9) {
    throw ConfigError("removal_fraction must lie in [0, 0.9]");
  }
  const double W = 44.0, H = 26.0;
  PriorMap prior;
  append_rect(prior, Vec2(0, 0), Vec2(W, H));
  std::vector<std::pair<Vec2, Vec2>> obstacles;
  for (double ycen : {7.0, 19.0}) {
    for (int i = 0; i < 7; ++i) {
      const double xcen = 8.0 + 5.0 * i;
      obstacles.emplace_back(Vec2(xcen - 1.25, ycen - 0.75),
                             Vec2(xcen + 1.25, ycen + 0.75));
    }
  }
  for (const auto& [lo, hi] : obstacles) append_rect(prior, lo, hi);
  finalize_prior_map(prior);

  // The observed world drops a seeded subset of the prior's obstacles.
  const int remove_n =
      static_cast<int>(std::lround(p.removal_fraction * obstacles.size()));
  std::vector<int> order(obstacles.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(mix_seed(p.seed, 0x9a27));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> removed(obstacles.size(), false);
  for (int i = 0; i < remove_n; ++i) removed[order[i]] = true;

  PriorMap world;
  append_rect(world, Vec2(0, 0), Vec2(W, H));
  for (size_t i = 0; i < obstacles.size(); ++i) {
    if (!removed[i]) append_rect(world, obstacles[i].first, obstacles[i].second);
  }
  finalize_prior_map(world);

  ScenarioBundle bundle;
  bundle.kind = "parking";
  bundle.prior = prior;
  bundle.scenario.map = world;
  bundle.scenario.noise_sigma = p.noise_sigma;
  bundle.scenario.rng_seed = p.seed;
  bundle.scenario.sensor.ray_count = p.ray_count;
  bundle.scenario.sensor.fov = p.fov;
  bundle.scenario.sensor.min_range = p.min_range;
  bundle.scenario.sensor.max_range = p.max_range > 0 ? p.max_range : 25.0;

  const int frames = p.frames > 0 ? p.frames : 900;
  const RoundedRect path(3.25, 3.25, 40.75, 22.75, 2.5);
  for (int k = 0; k < frames; ++k) {
    const double s = path.total * k / (frames - 1);
    bundle.scenario.trajectory.emplace_back(k * p.dt, path.at(s));
  }
  bundle.scenario.occluders = make_occluders(
      p.occluder_count, world.bounds, frames * p.dt, p.seed);

  // Path must keep clear of the observed structure.
  const auto segs = enumerate_segments(world);
  for (const auto& [t, pose] : bundle.scenario.trajectory) {
    for (const auto& seg : segs) {
      if (point_segment_distance(pose.translation(), seg.a, seg.b) < 0.8) {
        throw ConfigError("parking trajectory too close to structure");
      }
    }
  }
  return bundle;
}

}  // namespace

ScenarioBundle generate_scenario(const std::string& kind,
                                 const ScenarioParams& params) {
  if (params.frames == 0 || params.frames == 1) {
    throw ConfigError("frames must be >= 2");
  }
  if (params.dt <= 0.0) throw ConfigError("dt must be positive");
  if (params.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (params.occluder_count < 0) throw ConfigError("occluder_count must be >= 0");
  if (params.ray_count < 1) throw ConfigError("ray_count must be >= 1");
  if (params.fov <= 0.0) throw ConfigError("fov must be positive");
  if (params.min_range < 0.0 ||
      (params.max_range > 0.0 && params.min_range >= params.max_range)) {
    throw ConfigError("require 0 <= min_range < max_range");
  }
  if (kind == "loop") return make_loop(params);
  if (kind == "corridor") return make_corridor(params);
  if (kind == "parking") return make_parking(params);
  throw ConfigError("unknown scenario kind '" + kind + "'");
}

std::string serialize_scans(const std::vector<Scan>& scans) {
  std::string out;
  char buf[32];
  for (const auto& scan : scans) {
    std::snprintf(buf, sizeof(buf), "scan %.6f", scan.timestamp);
    out += buf;
    for (size_t i = 0; i < scan.ranges.size(); ++i) {
      if (scan.valid[i]) {
        std::snprintf(buf, sizeof(buf), " %.4f", scan.ranges[i]);
        out += buf;
      } else {
        out += " -1";
      }
    }
    out += '\n';
  }
  return out;
}

void save_scans(const std::string& path, const std::vector<Scan>& scans) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << serialize_scans(scans);
}

std::vector<Scan> load_scans(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("scan", "cannot open '" + path + "'", 0);
  std::vector<Scan> scans;
  std::string line;
  int line_no = 0;
  size_t ray_count = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "scan") throw ParseError("scan", "unknown record '" + tag + "'", line_no);
    Scan scan;
    if (!(ls >> scan.timestamp)) {
      throw ParseError("scan", "missing timestamp", line_no);
    }
    double v;
    while (ls >> v) {
      if (v < 0.0) {
        scan.ranges.push_back(0.0);
        scan.valid.push_back(0);
      } else {
        scan.ranges.push_back(v);
        scan.valid.push_back(1);
      }
    }
    if (!ls.eof()) throw ParseError("scan", "malformed range value", line_no);
    if (scan.ranges.empty()) throw ParseError("scan", "scan with no rays", line_no);
    if (ray_count == 0) ray_count = scan.ranges.size();
    if (scan.ranges.size() != ray_count) {
      throw ParseError("scan", "inconsistent ray count", line_no);
    }
    scans.push_back(std::move(scan));
  }
  return scans;
}

}  // namespace graphloc
