#pragma once

#include <Eigen/Core>

#include <utility>
#include <variant>
#include <vector>

namespace graphloc {

using Vec2 = Eigen::Vector2d;

// Wraps an angle to the half-open interval (-pi, pi].
double wrap_angle(double a);

// Wraps an angle difference between undirected lines to (-pi/2, pi/2].
double wrap_half_angle(double a);

struct Twist2 {
  double dx = 0.0;    // meters
  double dy = 0.0;    // meters
  double dphi = 0.0;  // radians

  double max_abs() const;
};

struct Pose2 {
  double x = 0.0;    // meters
  double y = 0.0;    // meters
  double yaw = 0.0;  // radians, kept in (-pi, pi]

  static Pose2 identity() { return Pose2{}; }

  Eigen::Matrix2d rotation() const;
  Vec2 translation() const { return Vec2(x, y); }
};

// Exact SE(2) exponential: rotation by dphi, translation V(dphi) * (dx, dy).
Pose2 se2_exp(const Twist2& v);

// Inverse of se2_exp. Throws std::domain_error when yaw sits exactly on the
// branch boundary (yaw == pi).
Twist2 se2_log(const Pose2& p);

Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& p);
Vec2 transform_point(const Pose2& p, const Vec2& point);
Vec2 transform_direction(const Pose2& p, const Vec2& dir);

// Flips a (near-)unit direction so its angle lies in [0, pi), then
// renormalizes. Idempotent.
Vec2 canonical_direction(Vec2 d);

struct PointFeature {
  Vec2 position = Vec2::Zero();  // meters
  double weight = 1.0;           // stability/confidence, >= 0
};

struct LineFeature {
  Vec2 anchor = Vec2::Zero();     // midpoint, meters
  Vec2 direction = Vec2(1, 0);    // unit, angle in [0, pi)
  double half_length = 0.0;       // meters
  int support_count = 0;          // inlier rays backing the fit
  double weight = 1.0;

  static LineFeature make(const Vec2& anchor, const Vec2& direction,
                          double half_length, int support_count = 0,
                          double weight = 1.0);

  // Endpoints are derived, never stored.
  Vec2 endpoint_a() const { return anchor - half_length * direction; }
  Vec2 endpoint_b() const { return anchor + half_length * direction; }
  double angle() const;  // [0, pi)
  Vec2 normal() const { return Vec2(-direction.y(), direction.x()); }
};

using FeatureNode = std::variant<PointFeature, LineFeature>;

inline bool is_point(const FeatureNode& n) {
  return std::holds_alternative<PointFeature>(n);
}
inline bool is_line(const FeatureNode& n) {
  return std::holds_alternative<LineFeature>(n);
}
Vec2 representative(const FeatureNode& n);
double node_weight(const FeatureNode& n);
FeatureNode transform_node(const Pose2& p, const FeatureNode& n);

// Undirected proximity graph over features. Edges are stored as sorted,
// deduplicated (a < b) index pairs.
struct FeatureGraph {
  std::vector<FeatureNode> nodes;
  std::vector<std::pair<int, int>> edges;
  int k = 0;

  std::vector<std::vector<int>> adjacency() const;
};

// Connects every node to its k nearest others by Euclidean distance on
// representative positions (all others when fewer than k exist). Ties break
// toward the lower node index.
FeatureGraph build_knn_graph(std::vector<FeatureNode> nodes, int k);

// Squared point-to-segment distance helpers shared by matching and retrieval.
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

}  // namespace graphloc
