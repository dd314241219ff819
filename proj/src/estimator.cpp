#include "graphloc/estimator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace graphloc {

namespace {

// Rotation jacobian block: d/dphi R(phi)|_0 * p = (-p.y, p.x).
Vec2 spin(const Vec2& p) { return Vec2(-p.y(), p.x()); }

double huber_weight(double norm, double delta) {
  if (norm <= delta) return 1.0;
  return delta / norm;
}

Twist2 clamp_step(const Twist2& d, const EstimatorConfig& cfg) {
  double scale = 1.0;
  const double trans = std::max(std::abs(d.dx), std::abs(d.dy));
  if (trans > cfg.max_step_trans) scale = std::min(scale, cfg.max_step_trans / trans);
  if (std::abs(d.dphi) > cfg.max_step_rot) {
    scale = std::min(scale, cfg.max_step_rot / std::abs(d.dphi));
  }
  if (scale >= 1.0) return d;
  return Twist2{d.dx * scale, d.dy * scale, d.dphi * scale};
}

SolveResult solve_spectral(const Eigen::Vector3d& g, const DegeneracyState& deg,
                           double lambda_r) {
  SolveResult out;
  const double lam1 = std::max(deg.eigenvalues[0], 0.0);
  const double floor = 1e-9 * std::max(lam1, 1.0);
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) {
    double denom = deg.eigenvalues[k];
    if (deg.weak[k]) {
      denom += lambda_r;
    } else if (denom < 1e-12 * std::max(lam1, 1.0)) {
      denom += floor;
      out.floored = true;
    }
    const Eigen::Vector3d u = deg.basis.col(k);
    x -= u.dot(g) / denom * u;
  }
  out.delta = Twist2{x[0], x[1], x[2]};
  return out;
}

}  // namespace

void EvidenceBuffer::push(const Eigen::Matrix3d& H, const Eigen::Vector3d& g,
                          double stamp) {
  if (capacity > 0 && static_cast<int>(entries.size()) >= capacity) {
    entries.erase(entries.begin());
    ++dropped;
  }
  entries.push_back(BufferedEvidence{H, g, stamp});
}

Pose2 predict_cv(const Pose2& pose_prev, const Pose2& pose_prev2) {
  const Twist2 xi = se2_log(compose(inverse(pose_prev2), pose_prev));
  return compose(pose_prev, se2_exp(xi));
}

NormalSystem build_normal_system(const TransportPlan& plan,
                                 const CandidateSet& cands,
                                 const FeatureGraph& source_graph,
                                 const FeatureGraph& target_graph,
                                 const Pose2& pose,
                                 const EstimatorConfig& cfg) {
  NormalSystem ns;
  if (plan.gamma.size() != cands.size()) return ns;
  const Eigen::Matrix2d R = pose.rotation();

  for (int i = 0; i < cands.n_source; ++i) {
    for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
      const double gamma = plan.gamma[e];
      if (gamma <= 0.0) continue;
      const int j = cands.target_index[e];
      const FeatureNode& src = source_graph.nodes[i];
      const FeatureNode& tgt = target_graph.nodes[j];
      const double w_node = node_weight(src) * node_weight(tgt);

      Eigen::MatrixXd J;
      Eigen::VectorXd r;
      if (is_point(src) && is_point(tgt)) {
        const Vec2 p = std::get<PointFeature>(src).position;
        const Vec2 q = transform_point(pose, p);
        r = (q - std::get<PointFeature>(tgt).position).eval();
        J.resize(2, 3);
        J.block<2, 2>(0, 0) = R;
        J.block<2, 1>(0, 2) = R * spin(p);
      } else if (is_point(src) && is_line(tgt)) {
        const Vec2 p = std::get<PointFeature>(src).position;
        const auto& line = std::get<LineFeature>(tgt);
        const Vec2 n = line.normal();
        const Vec2 q = transform_point(pose, p);
        r.resize(1);
        r[0] = n.dot(q - line.anchor);
        J.resize(1, 3);
        J.block<1, 2>(0, 0) = n.transpose() * R;
        J(0, 2) = n.dot(R * spin(p));
      } else if (is_line(src) && is_line(tgt)) {
        const auto& sl = std::get<LineFeature>(src);
        const auto& tl = std::get<LineFeature>(tgt);
        const Vec2 n = tl.normal();
        const Vec2 a = transform_point(pose, sl.anchor);
        const Vec2 d = transform_direction(pose, sl.direction);
        r.resize(2);
        r[0] = n.dot(a - tl.anchor);
        r[1] = wrap_half_angle(std::atan2(d.y(), d.x()) -
                               std::atan2(tl.direction.y(), tl.direction.x()));
        J.resize(2, 3);
        J.block<1, 2>(0, 0) = n.transpose() * R;
        J(0, 2) = n.dot(R * spin(sl.anchor));
        J(1, 0) = 0.0;
        J(1, 1) = 0.0;
        J(1, 2) = 1.0;
      } else {
        continue;
      }

      J.col(2) /= cfg.rot_scale;  // yaw in length-equivalent units
      const double w = gamma * w_node * huber_weight(r.norm(), cfg.huber_delta);
      if (w <= 0.0) continue;
      ns.H += w * J.transpose() * J;
      ns.g += w * J.transpose() * r;
      ns.total_weight += w;
      ++ns.residual_count;
    }
  }
  // Symmetrize against accumulation round-off.
  ns.H = (0.5 * (ns.H + ns.H.transpose())).eval();
  return ns;
}

DegeneracyState detect_weak_directions(const Eigen::Matrix3d& H,
                                       const EstimatorConfig& cfg) {
  DegeneracyState deg;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(H);
  // Eigen returns ascending order; flip to descending.
  for (int k = 0; k < 3; ++k) {
    deg.eigenvalues[k] = es.eigenvalues()[2 - k];
    deg.basis.col(k) = es.eigenvectors().col(2 - k);
  }
  if (deg.eigenvalues[0] < cfg.lambda_abs_floor) {
    deg.weak = {true, true, true};
    return deg;
  }
  for (int k = 0; k < 3; ++k) {
    deg.weak[k] = deg.eigenvalues[k] < cfg.tau_lambda_rel * deg.eigenvalues[0];
  }
  return deg;
}

SolveResult solve_masked(const Eigen::Matrix3d& H, const Eigen::Vector3d& g,
                         const DegeneracyState& deg, double lambda_r) {
  (void)H;
  return solve_spectral(g, deg, lambda_r);
}

SolveResult solve_masked(const Eigen::Matrix3d& H, const Eigen::Vector3d& g,
                         const DegeneracyState& deg,
                         const EstimatorConfig& cfg) {
  (void)H;
  return solve_spectral(g, deg, cfg.lambda_r);
}

SolveResult release_delayed(const Eigen::Matrix3d& H_t,
                            const Eigen::Vector3d& g_t,
                            EvidenceBuffer& buffer) {
  Eigen::Matrix3d H_bar = Eigen::Matrix3d::Zero();
  Eigen::Vector3d g_bar = Eigen::Vector3d::Zero();
  for (const auto& ev : buffer.entries) {
    H_bar += ev.H;
    g_bar += ev.g;
  }
  H_bar += H_t;
  g_bar += g_t;
  buffer.clear();

  DegeneracyState deg;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(H_bar);
  for (int k = 0; k < 3; ++k) {
    deg.eigenvalues[k] = es.eigenvalues()[2 - k];
    deg.basis.col(k) = es.eigenvectors().col(2 - k);
  }
  return solve_spectral(g_bar, deg, 0.0);
}

const char* to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::ok: return "ok";
    case TrackStatus::coast: return "coast";
    case TrackStatus::lost: return "lost";
  }
  return "?";
}

Tracker::Tracker(const MapModel* map, TrackerConfig cfg, const Pose2& seed_prev2,
                 const Pose2& seed_prev)
    : map_(map), cfg_(std::move(cfg)), prev_(seed_prev), prev2_(seed_prev2) {
  buffer_.capacity = cfg_.estimator.buffer_capacity;
}

Tracker::Tracker(const MapModel* map, TrackerConfig cfg, const Pose2& seed)
    : Tracker(map, std::move(cfg), seed, seed) {}

std::pair<Pose2, StepDiagnostics> Tracker::track_step(const Scan& scan) {
  StepDiagnostics diag;
  diag.t = scan.timestamp;

  const Pose2 predicted = predict_cv(prev_, prev2_);
  const FeatureGraph obs =
      extract_observation_graph(scan, cfg_.sensor, cfg_.frontend, cfg_.graph_k);
  const VisibleSubgraph visible =
      raycast_visible(*map_, predicted, cfg_.sensor);
  diag.obs_nodes = static_cast<int>(obs.nodes.size());
  diag.map_nodes = static_cast<int>(visible.graph.nodes.size());

  Pose2 pose = predicted;
  bool coast = obs.nodes.empty() || visible.empty();
  bool released = false;

  NormalSystem final_ns;
  DegeneracyState final_deg;
  bool have_system = false;

  if (!coast) {
    CandidateSet cands;
    TransportPlan plan;
    const auto& est = cfg_.estimator;

    for (int it = 0; it < est.max_gn_iters; ++it) {
      if (!est.freeze_plan || it == 0) {
        cands = build_candidates(obs, visible.graph, pose, cfg_.match);
        plan = solve_uot(cands, obs, visible.graph, cfg_.match);
      }
      if (plan.empty()) {
        if (it == 0) coast = true;
        break;
      }
      const NormalSystem ns =
          build_normal_system(plan, cands, obs, visible.graph, pose, est);
      if (ns.residual_count == 0) {
        if (it == 0) coast = true;
        break;
      }
      const DegeneracyState deg = detect_weak_directions(ns.H, est);
      final_ns = ns;
      final_deg = deg;
      have_system = true;
      diag.iters = it + 1;
      diag.plan_mass = plan.total_mass();

      Twist2 dxi;
      if (!est.delayed_enabled) {
        // Ablation: plain per-frame solve, no masking, no buffering.
        DegeneracyState none = deg;
        none.weak = {false, false, false};
        dxi = solve_spectral(ns.g, none, 0.0).delta;
      } else if (deg.any()) {
        const double lr = est.lambda_r * std::max(deg.eigenvalues[0], 1.0);
        dxi = solve_masked(ns.H, ns.g, deg, lr).delta;
      } else if (!released && buffer_.size() > 0) {
        dxi = release_delayed(ns.H, ns.g, buffer_).delta;
        released = true;
      } else {
        const double lr = est.lambda_r * std::max(deg.eigenvalues[0], 1.0);
        dxi = solve_masked(ns.H, ns.g, deg, lr).delta;  // D empty: -H^-1 g
      }
      dxi.dphi /= est.rot_scale;  // back to radians
      dxi = clamp_step(dxi, est);
      pose = compose(pose, se2_exp(dxi));
      if (dxi.max_abs() < est.step_tol) break;
    }

    if (!coast && est.delayed_enabled && have_system && final_deg.any()) {
      buffer_.push(final_ns.H, final_ns.g, scan.timestamp);
    }
  }

  if (coast) {
    pose = predicted;
    ++consecutive_coast_;
    if (consecutive_coast_ > cfg_.estimator.coast_limit) lost_ = true;
    diag.status = lost_ ? TrackStatus::lost : TrackStatus::coast;
  } else {
    consecutive_coast_ = 0;
    lost_ = false;
    diag.status = TrackStatus::ok;
  }

  if (have_system) {
    diag.lambda = final_deg.eigenvalues;
    diag.weak_count = final_deg.weak_count();
  }
  diag.buffer_len = static_cast<int>(buffer_.size());
  diag.incremental = compose(inverse(prev_), pose);

  if (released) {
    // A release corrects error accumulated over many frames; feeding it into
    // the constant-velocity difference would read it as motion. Rebase the
    // older pose so the velocity estimate carries through the jump.
    const Twist2 vel = se2_log(compose(inverse(prev2_), prev_));
    prev2_ = compose(pose, se2_exp(Twist2{-vel.dx, -vel.dy, -vel.dphi}));
  } else {
    prev2_ = prev_;
  }
  prev_ = pose;
  return {pose, diag};
}

std::string serialize_diagnostics(const Pose2& pose, const StepDiagnostics& d) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%.6f %.9f %.9f %.9f %.6g %.6g %.6g %d %d %.6g %d %s\n", d.t,
                pose.x, pose.y, pose.yaw, d.lambda[0], d.lambda[1], d.lambda[2],
                d.weak_count, d.buffer_len, d.plan_mass, d.iters,
                to_string(d.status));
  return std::string(buf);
}

}  // namespace graphloc
