#include "graphloc/prior_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace graphloc {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMinVertexSeparation = 1e-6;  // meters

double cross2(const Vec2& p, const Vec2& q) {
  return p.x() * q.y() - p.y() * q.x();
}
}  // namespace

void finalize_prior_map(PriorMap& map) {
  if (map.polylines.size() != map.closed_flags.size()) {
    throw std::invalid_argument("prior map: closed_flags size mismatch");
  }
  Vec2 lo(std::numeric_limits<double>::max(),
          std::numeric_limits<double>::max());
  Vec2 hi = -lo;
  for (const auto& chain : map.polylines) {
    if (chain.size() < 2) {
      throw std::invalid_argument("prior map: polyline with fewer than 2 vertices");
    }
    for (size_t i = 0; i < chain.size(); ++i) {
      if (!chain[i].allFinite()) {
        throw std::invalid_argument("prior map: non-finite vertex");
      }
      if (i > 0 && (chain[i] - chain[i - 1]).norm() <= kMinVertexSeparation) {
        throw std::invalid_argument("prior map: duplicate consecutive vertices");
      }
      lo = lo.cwiseMin(chain[i]);
      hi = hi.cwiseMax(chain[i]);
    }
  }
  if (map.polylines.empty()) {
    lo = Vec2::Zero();
    hi = Vec2::Zero();
  }
  map.bounds = Aabb{lo, hi};
}

bool SensorModel::full_circle() const {
  return std::abs(fov - 2.0 * kPi) < 1e-9;
}

std::vector<MapSegment> enumerate_segments(const PriorMap& map) {
  std::vector<MapSegment> segs;
  for (size_t pi = 0; pi < map.polylines.size(); ++pi) {
    const auto& chain = map.polylines[pi];
    const int n = static_cast<int>(chain.size());
    const int nseg = map.closed_flags[pi] ? n : n - 1;
    for (int s = 0; s < nseg; ++s) {
      MapSegment seg;
      seg.a = chain[s];
      seg.b = chain[(s + 1) % n];
      seg.polyline = static_cast<int>(pi);
      seg.vertex_a = s;
      seg.vertex_b = (s + 1) % n;
      segs.push_back(seg);
    }
  }
  return segs;
}

MapModel build_map_model(const PriorMap& map, int k, double corner_angle_deg) {
  MapModel model;
  model.map = map;
  model.segments = enumerate_segments(map);

  std::vector<FeatureNode> line_nodes;
  for (const auto& seg : model.segments) {
    const Vec2 d = seg.b - seg.a;
    line_nodes.emplace_back(LineFeature::make(0.5 * (seg.a + seg.b), d,
                                              0.5 * d.norm(),
                                              /*support_count=*/0, 1.0));
    model.segment_node.push_back(static_cast<int>(line_nodes.size()) - 1);
  }

  // Vertex -> corner point promotion by interior turn angle.
  const double threshold = corner_angle_deg * kPi / 180.0;
  std::vector<FeatureNode> point_nodes;
  model.vertex_node.resize(map.polylines.size());
  for (size_t pi = 0; pi < map.polylines.size(); ++pi) {
    const auto& chain = map.polylines[pi];
    const int n = static_cast<int>(chain.size());
    model.vertex_node[pi].assign(n, -1);
    for (int v = 0; v < n; ++v) {
      int prev = v - 1, next = v + 1;
      if (map.closed_flags[pi]) {
        prev = (v + n - 1) % n;
        next = (v + 1) % n;
      } else if (v == 0 || v == n - 1) {
        continue;  // open-chain endpoints are not turns
      }
      const Vec2 din = (chain[v] - chain[prev]).normalized();
      const Vec2 dout = (chain[next] - chain[v]).normalized();
      const double turn = std::acos(std::clamp(din.dot(dout), -1.0, 1.0));
      if (turn >= threshold) {
        point_nodes.emplace_back(PointFeature{chain[v], 1.0});
        model.vertex_node[pi][v] =
            static_cast<int>(line_nodes.size() + point_nodes.size()) - 1;
      }
    }
  }

  std::vector<FeatureNode> all_nodes = std::move(line_nodes);
  all_nodes.insert(all_nodes.end(), point_nodes.begin(), point_nodes.end());
  model.graph = build_knn_graph(std::move(all_nodes), k);
  return model;
}

FeatureGraph map_to_graph(const PriorMap& map, int k, double corner_angle_deg) {
  return build_map_model(map, k, corner_angle_deg).graph;
}

std::optional<double> ray_segment_intersect(const Vec2& origin, const Vec2& dir,
                                            const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const Vec2 ao = a - origin;
  const double denom = cross2(dir, ab);
  const double ab_len = ab.norm();

  if (std::abs(denom) <= 1e-12 * std::max(1.0, ab_len)) {
    // Parallel. Collinear iff the offset is also parallel to dir.
    if (std::abs(cross2(ao, dir)) > 1e-9 * std::max(1.0, ao.norm())) {
      return std::nullopt;
    }
    const double ta = ao.dot(dir);
    const double tb = (b - origin).dot(dir);
    const double t_hi = std::max(ta, tb);
    if (t_hi < 0.0) return std::nullopt;
    return std::max(0.0, std::min(ta, tb));
  }

  const double t = cross2(ao, ab) / denom;
  const double u = cross2(ao, dir) / denom;
  if (t < 0.0 || u < -1e-12 || u > 1.0 + 1e-12) return std::nullopt;
  return t;
}

std::vector<RayHit> cast_rays(const MapModel& model, const Pose2& pose,
                              const SensorModel& sensor) {
  std::vector<RayHit> hits(sensor.ray_count);
  const Vec2 origin = pose.translation();
  for (int i = 0; i < sensor.ray_count; ++i) {
    const double ang = pose.yaw + sensor.azimuth(i);
    const Vec2 dir(std::cos(ang), std::sin(ang));
    double best = std::numeric_limits<double>::infinity();
    int best_seg = -1;
    for (size_t s = 0; s < model.segments.size(); ++s) {
      const auto t = ray_segment_intersect(origin, dir, model.segments[s].a,
                                           model.segments[s].b);
      if (t && *t < best) {
        best = *t;
        best_seg = static_cast<int>(s);
      }
    }
    if (best_seg >= 0 && best >= sensor.min_range && best <= sensor.max_range) {
      hits[i] = RayHit{best, best_seg};
    } else {
      hits[i] = RayHit{0.0, -1};
    }
  }
  return hits;
}

VisibleSubgraph raycast_visible(const MapModel& model, const Pose2& pose,
                                const SensorModel& sensor) {
  const auto hits = cast_rays(model, pose, sensor);

  std::set<int> retained;
  for (const auto& h : hits) {
    if (h.segment < 0) continue;
    const auto& seg = model.segments[h.segment];
    retained.insert(model.segment_node[h.segment]);
    const int pa = model.vertex_node[seg.polyline][seg.vertex_a];
    const int pb = model.vertex_node[seg.polyline][seg.vertex_b];
    if (pa >= 0) retained.insert(pa);
    if (pb >= 0) retained.insert(pb);
  }

  // Local neighborhoods: 1-hop kNN neighbors of everything hit.
  const auto adj = model.graph.adjacency();
  std::set<int> with_neighbors = retained;
  for (int idx : retained) {
    for (int nb : adj[idx]) with_neighbors.insert(nb);
  }

  VisibleSubgraph sub;
  sub.origin_indices.assign(with_neighbors.begin(), with_neighbors.end());
  std::vector<int> remap(model.graph.nodes.size(), -1);
  for (size_t i = 0; i < sub.origin_indices.size(); ++i) {
    remap[sub.origin_indices[i]] = static_cast<int>(i);
    sub.graph.nodes.push_back(model.graph.nodes[sub.origin_indices[i]]);
  }
  sub.graph.k = model.graph.k;
  for (const auto& [a, b] : model.graph.edges) {
    if (remap[a] >= 0 && remap[b] >= 0) {
      sub.graph.edges.emplace_back(remap[a], remap[b]);
    }
  }
  return sub;
}

PriorMap parse_map_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  PriorMap map;
  std::vector<int> polyline_lines;

  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    if (!header_seen) {
      std::string trimmed = line.substr(first);
      while (!trimmed.empty() && (trimmed.back() == '\r' || trimmed.back() == ' '))
        trimmed.pop_back();
      if (trimmed != "graphloc-map v1") {
        throw ParseError("map", "expected header 'graphloc-map v1'", line_no);
      }
      header_seen = true;
      continue;
    }

    std::istringstream ls(line);
    std::string tag, mode;
    ls >> tag;
    if (tag != "poly") throw ParseError("map", "unknown record '" + tag + "'", line_no);
    ls >> mode;
    bool closed;
    if (mode == "closed") closed = true;
    else if (mode == "open") closed = false;
    else throw ParseError("map", "expected 'closed' or 'open'", line_no);

    std::vector<double> coords;
    double v;
    while (ls >> v) coords.push_back(v);
    if (!ls.eof()) throw ParseError("map", "malformed coordinate", line_no);
    if (coords.size() < 4 || coords.size() % 2 != 0) {
      throw ParseError("map", "polyline needs an even number (>= 4) of coordinates",
                          line_no);
    }
    std::vector<Vec2> chain;
    for (size_t i = 0; i < coords.size(); i += 2) {
      chain.emplace_back(coords[i], coords[i + 1]);
    }
    map.polylines.push_back(std::move(chain));
    map.closed_flags.push_back(closed);
    polyline_lines.push_back(line_no);
  }
  if (!header_seen) throw ParseError("map", "empty file", 1);

  // Re-run chain validation with line attribution.
  for (size_t pi = 0; pi < map.polylines.size(); ++pi) {
    const auto& chain = map.polylines[pi];
    for (size_t i = 1; i < chain.size(); ++i) {
      if ((chain[i] - chain[i - 1]).norm() <= kMinVertexSeparation) {
        throw ParseError("map", "duplicate consecutive vertices", polyline_lines[pi]);
      }
    }
  }
  finalize_prior_map(map);
  return map;
}

std::string serialize_map(const PriorMap& map) {
  std::string out = "graphloc-map v1\n";
  char buf[64];
  for (size_t pi = 0; pi < map.polylines.size(); ++pi) {
    out += map.closed_flags[pi] ? "poly closed" : "poly open";
    for (const auto& v : map.polylines[pi]) {
      std::snprintf(buf, sizeof(buf), " %.9g %.9g", v.x(), v.y());
      out += buf;
    }
    out += '\n';
  }
  return out;
}

PriorMap load_map(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("map", "cannot open '" + path + "'", 0);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_map_text(ss.str());
}

void save_map(const PriorMap& map, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << serialize_map(map);
}

}  // namespace graphloc
