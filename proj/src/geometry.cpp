#include "graphloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace graphloc {

namespace {
constexpr double kPi = 3.14159265358979323846;
// Below this rotation magnitude the V(theta) blocks switch to series form.
constexpr double kSmallAngle = 1e-4;
}  // namespace

double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

double wrap_half_angle(double a) {
  double w = std::fmod(a + kPi / 2.0, kPi);
  if (w <= 0.0) w += kPi;
  return w - kPi / 2.0;
}

double Twist2::max_abs() const {
  return std::max({std::abs(dx), std::abs(dy), std::abs(dphi)});
}

Eigen::Matrix2d Pose2::rotation() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Pose2 se2_exp(const Twist2& v) {
  const double th = v.dphi;
  double a, b;  // V = [[a, -b], [b, a]]
  if (std::abs(th) < kSmallAngle) {
    const double th2 = th * th;
    a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    b = th / 2.0 - th2 * th / 24.0 + th2 * th2 * th / 720.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th;
  }
  Pose2 p;
  p.x = a * v.dx - b * v.dy;
  p.y = b * v.dx + a * v.dy;
  p.yaw = wrap_angle(th);
  return p;
}

Twist2 se2_log(const Pose2& p) {
  const double th = p.yaw;
  if (th == kPi) {
    throw std::domain_error("se2_log: yaw on branch boundary (pi)");
  }
  double a, b;
  if (std::abs(th) < kSmallAngle) {
    const double th2 = th * th;
    a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
    b = th / 2.0 - th2 * th / 24.0 + th2 * th2 * th / 720.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th;
  }
  const double det = a * a + b * b;
  Twist2 v;
  v.dx = (a * p.x + b * p.y) / det;
  v.dy = (-b * p.x + a * p.y) / det;
  v.dphi = th;
  return v;
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  Pose2 r;
  r.x = a.x + c * b.x - s * b.y;
  r.y = a.y + s * b.x + c * b.y;
  r.yaw = wrap_angle(a.yaw + b.yaw);
  return r;
}

Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  Pose2 r;
  r.x = -(c * p.x + s * p.y);
  r.y = -(-s * p.x + c * p.y);
  r.yaw = wrap_angle(-p.yaw);
  return r;
}

Vec2 transform_point(const Pose2& p, const Vec2& point) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return Vec2(p.x + c * point.x() - s * point.y(),
              p.y + s * point.x() + c * point.y());
}

Vec2 transform_direction(const Pose2& p, const Vec2& dir) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return Vec2(c * dir.x() - s * dir.y(), s * dir.x() + c * dir.y());
}

Vec2 canonical_direction(Vec2 d) {
  const double n = d.norm();
  if (n <= 0.0) throw std::invalid_argument("canonical_direction: zero vector");
  d /= n;
  if (d.y() < 0.0 || (d.y() == 0.0 && d.x() < 0.0)) d = -d;
  return d;
}

LineFeature LineFeature::make(const Vec2& anchor, const Vec2& direction,
                              double half_length, int support_count,
                              double weight) {
  LineFeature f;
  f.anchor = anchor;
  f.direction = canonical_direction(direction);
  f.half_length = half_length;
  f.support_count = support_count;
  f.weight = weight;
  return f;
}

double LineFeature::angle() const {
  double a = std::atan2(direction.y(), direction.x());
  if (a < 0.0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a;
}

Vec2 representative(const FeatureNode& n) {
  if (const auto* p = std::get_if<PointFeature>(&n)) return p->position;
  return std::get<LineFeature>(n).anchor;
}

double node_weight(const FeatureNode& n) {
  if (const auto* p = std::get_if<PointFeature>(&n)) return p->weight;
  return std::get<LineFeature>(n).weight;
}

FeatureNode transform_node(const Pose2& p, const FeatureNode& n) {
  if (const auto* pt = std::get_if<PointFeature>(&n)) {
    PointFeature out = *pt;
    out.position = transform_point(p, pt->position);
    return out;
  }
  const auto& ln = std::get<LineFeature>(n);
  LineFeature out = ln;
  out.anchor = transform_point(p, ln.anchor);
  out.direction = canonical_direction(transform_direction(p, ln.direction));
  return out;
}

std::vector<std::vector<int>> FeatureGraph::adjacency() const {
  std::vector<std::vector<int>> adj(nodes.size());
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

FeatureGraph build_knn_graph(std::vector<FeatureNode> nodes, int k) {
  FeatureGraph g;
  g.k = k;
  g.nodes = std::move(nodes);
  const int n = static_cast<int>(g.nodes.size());
  if (n <= 1 || k < 1) return g;

  std::vector<Vec2> reps(n);
  for (int i = 0; i < n; ++i) reps[i] = representative(g.nodes[i]);

  std::vector<std::pair<int, int>> edges;
  std::vector<std::pair<double, int>> dist(n - 1);
  for (int i = 0; i < n; ++i) {
    dist.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.emplace_back((reps[j] - reps[i]).squaredNorm(), j);
    }
    const int take = std::min<int>(k, static_cast<int>(dist.size()));
    std::partial_sort(dist.begin(), dist.begin() + take, dist.end());
    for (int t = 0; t < take; ++t) {
      const int j = dist[t].second;
      edges.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  return g;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  double t = (p - a).dot(ab) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace graphloc
