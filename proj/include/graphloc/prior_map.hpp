#pragma once

#include <optional>
#include <string>
#include <vector>

#include "graphloc/errors.hpp"
#include "graphloc/geometry.hpp"

namespace graphloc {

struct Aabb {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() &&
           p.y() <= max.y();
  }
};

// Compact structural world model: polyline chains in the world frame.
struct PriorMap {
  std::vector<std::vector<Vec2>> polylines;
  std::vector<bool> closed_flags;
  Aabb bounds;

  bool empty() const { return polylines.empty(); }
};

// Recomputes bounds and checks the chain invariants (>= 2 vertices,
// consecutive vertices separated by more than 1e-6 m). Throws on violation.
void finalize_prior_map(PriorMap& map);

struct SensorModel {
  int ray_count = 720;
  double fov = 2.0 * 3.14159265358979323846;  // radians, full span
  double max_range = 30.0;                    // meters
  double min_range = 0.1;                     // meters

  // Azimuth of ray i in the sensor frame.
  double azimuth(int i) const {
    return -fov / 2.0 + fov * static_cast<double>(i) / ray_count;
  }
  bool full_circle() const;
};

// One world segment of a polyline, with provenance into the map graph.
struct MapSegment {
  Vec2 a, b;
  int polyline = 0;
  int vertex_a = 0;  // index of endpoint a within the polyline
  int vertex_b = 0;
};

// Deterministic global segment list (polyline order, then segment order).
std::vector<MapSegment> enumerate_segments(const PriorMap& map);

// Prior map bundled with its fixed feature graph and the bookkeeping that
// lets ray hits be mapped back to graph nodes.
struct MapModel {
  PriorMap map;
  FeatureGraph graph;
  std::vector<MapSegment> segments;        // global segment list
  std::vector<int> segment_node;           // segment -> line node index
  std::vector<std::vector<int>> vertex_node;  // [polyline][vertex] -> point node or -1
};

// Graph construction: one line node per segment, one point node per vertex
// whose interior turn angle reaches corner_angle_deg, kNN proximity edges.
MapModel build_map_model(const PriorMap& map, int k = 4,
                         double corner_angle_deg = 20.0);
FeatureGraph map_to_graph(const PriorMap& map, int k = 4,
                          double corner_angle_deg = 20.0);

// Smallest t >= 0 with origin + t*dir on [a, b]; absent when the ray misses.
// Collinear overlap returns the distance to the nearest overlapping point.
std::optional<double> ray_segment_intersect(const Vec2& origin,
                                            const Vec2& dir, const Vec2& a,
                                            const Vec2& b);

struct VisibleSubgraph {
  FeatureGraph graph;
  std::vector<int> origin_indices;  // subgraph node -> full map-graph node

  bool empty() const { return graph.nodes.empty(); }
};

struct RayHit {
  double range = 0.0;
  int segment = -1;  // global segment index, -1 = no return
};

// First-hit ranges for all rays of the sensor at the given pose.
std::vector<RayHit> cast_rays(const MapModel& model, const Pose2& pose,
                              const SensorModel& sensor);

// Pose-conditioned retrieval: keeps line nodes of first-hit segments, their
// endpoint corner nodes, and the 1-hop kNN neighborhood of everything kept.
VisibleSubgraph raycast_visible(const MapModel& model, const Pose2& pose,
                                const SensorModel& sensor);

// Plain-text map file (header "graphloc-map v1"). Throws ParseError with
// the offending line number on malformed input.
PriorMap load_map(const std::string& path);
void save_map(const PriorMap& map, const std::string& path);
PriorMap parse_map_text(const std::string& text);
std::string serialize_map(const PriorMap& map);

}  // namespace graphloc
