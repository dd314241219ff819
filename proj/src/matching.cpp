#include "graphloc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace graphloc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double undirected_angle(const Vec2& a, const Vec2& b) {
  return std::acos(std::clamp(std::abs(a.dot(b)), 0.0, 1.0));
}
}  // namespace

double TransportPlan::total_mass() const {
  double m = 0.0;
  for (double g : gamma) m += g;
  return m;
}

std::vector<double> row_marginals(const TransportPlan& plan,
                                  const CandidateSet& cands) {
  std::vector<double> r(cands.n_source, 0.0);
  if (plan.gamma.size() != cands.size()) return r;
  for (int i = 0; i < cands.n_source; ++i) {
    for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
      r[i] += plan.gamma[e];
    }
  }
  return r;
}

std::vector<double> column_marginals(const TransportPlan& plan,
                                     const CandidateSet& cands) {
  std::vector<double> c(cands.n_target, 0.0);
  if (plan.gamma.size() != cands.size()) return c;
  for (size_t e = 0; e < cands.size(); ++e) {
    c[cands.target_index[e]] += plan.gamma[e];
  }
  return c;
}

std::optional<double> pair_cost(const FeatureNode& source,
                                const FeatureNode& target, const Pose2& pose,
                                const MatchConfig& cfg) {
  if (is_point(source) && is_point(target)) {
    const Vec2 p = transform_point(pose, std::get<PointFeature>(source).position);
    return (p - std::get<PointFeature>(target).position).norm();
  }
  if (is_line(source) && is_line(target)) {
    const auto& src = std::get<LineFeature>(source);
    const auto& tgt = std::get<LineFeature>(target);
    const Vec2 d = transform_direction(pose, src.direction);
    const double dtheta = undirected_angle(d, tgt.direction);
    const Vec2 delta = transform_point(pose, src.anchor) - tgt.anchor;
    const double along = delta.dot(tgt.direction);
    const Vec2 t_perp = delta - along * tgt.direction;
    // A fragment anchored anywhere within the target's extent carries no
    // along-track information; only the excess beyond the extent is charged.
    const double t_par = std::max(0.0, std::abs(along) - tgt.half_length);
    return cfg.w_theta * dtheta * dtheta + cfg.w_perp * t_perp.norm() +
           cfg.w_par * t_par;
  }
  if (is_point(source) && is_line(target)) {
    const auto& tgt = std::get<LineFeature>(target);
    const Vec2 p = transform_point(pose, std::get<PointFeature>(source).position);
    return point_segment_distance(p, tgt.endpoint_a(), tgt.endpoint_b());
  }
  return std::nullopt;  // line -> point channel disallowed
}

double gate_distance(const FeatureNode& source, const FeatureNode& target,
                     const Pose2& pose) {
  const Vec2 rep = transform_point(pose, representative(source));
  if (is_line(target)) {
    const auto& tgt = std::get<LineFeature>(target);
    return point_segment_distance(rep, tgt.endpoint_a(), tgt.endpoint_b());
  }
  return (rep - std::get<PointFeature>(target).position).norm();
}

CandidateSet build_candidates(const FeatureGraph& source_graph,
                              const FeatureGraph& target_graph,
                              const Pose2& pose, const MatchConfig& cfg) {
  CandidateSet out;
  out.n_source = static_cast<int>(source_graph.nodes.size());
  out.n_target = static_cast<int>(target_graph.nodes.size());
  out.row_ptr.assign(out.n_source + 1, 0);

  const double m = cfg.total_mass > 0.0
                       ? cfg.total_mass
                       : static_cast<double>(std::min(out.n_source, out.n_target));
  out.mu.resize(out.n_source);
  for (int i = 0; i < out.n_source; ++i) {
    out.mu[i] = out.n_source > 0
                    ? m / out.n_source * node_weight(source_graph.nodes[i])
                    : 0.0;
  }
  out.nu.resize(out.n_target);
  for (int j = 0; j < out.n_target; ++j) {
    out.nu[j] = out.n_target > 0
                    ? m / out.n_target * node_weight(target_graph.nodes[j])
                    : 0.0;
  }

  std::vector<std::pair<double, int>> row;
  for (int i = 0; i < out.n_source; ++i) {
    row.clear();
    for (int j = 0; j < out.n_target; ++j) {
      const auto c =
          pair_cost(source_graph.nodes[i], target_graph.nodes[j], pose, cfg);
      if (!c || !std::isfinite(*c)) continue;
      if (gate_distance(source_graph.nodes[i], target_graph.nodes[j], pose) >
          cfg.gate_radius) {
        continue;
      }
      row.emplace_back(*c, j);
    }
    const int take = std::min<int>(cfg.top_k, static_cast<int>(row.size()));
    std::partial_sort(row.begin(), row.begin() + take, row.end());
    if (take == 0) ++out.empty_sources;
    for (int t = 0; t < take; ++t) {
      out.target_index.push_back(row[t].second);
      out.cost.push_back(row[t].first);
    }
    out.row_ptr[i + 1] = static_cast<int>(out.target_index.size());
  }
  return out;
}

CandidateSet build_candidates(const FeatureGraph& source_graph,
                              const VisibleSubgraph& target, const Pose2& pose,
                              const MatchConfig& cfg) {
  return build_candidates(source_graph, target.graph, pose, cfg);
}

double relational_penalty(const FeatureNode& source_a,
                          const FeatureNode& source_b,
                          const FeatureNode& target_a,
                          const FeatureNode& target_b) {
  if (is_point(source_a) && is_point(source_b) && is_point(target_a) &&
      is_point(target_b)) {
    const double ds = (std::get<PointFeature>(source_a).position -
                       std::get<PointFeature>(source_b).position)
                          .norm();
    const double dt = (std::get<PointFeature>(target_a).position -
                       std::get<PointFeature>(target_b).position)
                          .norm();
    return (ds - dt) * (ds - dt);
  }
  if (is_line(source_a) && is_line(source_b) && is_line(target_a) &&
      is_line(target_b)) {
    const double ts = undirected_angle(std::get<LineFeature>(source_a).direction,
                                       std::get<LineFeature>(source_b).direction);
    const double tt = undirected_angle(std::get<LineFeature>(target_a).direction,
                                       std::get<LineFeature>(target_b).direction);
    return (ts - tt) * (ts - tt);
  }
  return 0.0;
}

TransportPlan greedy_plan(const CandidateSet& cands) {
  TransportPlan plan;
  plan.n_source = cands.n_source;
  plan.n_target = cands.n_target;
  if (cands.size() == 0) return plan;
  plan.gamma.assign(cands.size(), 0.0);
  for (int i = 0; i < cands.n_source; ++i) {
    int best = -1;
    for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
      if (best < 0 || cands.cost[e] < cands.cost[best] ||
          (cands.cost[e] == cands.cost[best] &&
           cands.target_index[e] < cands.target_index[best])) {
        best = e;
      }
    }
    if (best >= 0) plan.gamma[best] = cands.mu[i];
  }
  return plan;
}

namespace {

// One unbalanced Sinkhorn solve in the log domain against the given
// effective costs. Potentials are warm-started across outer iterations.
void sinkhorn_log(const CandidateSet& cands, const std::vector<double>& cost,
                  const MatchConfig& cfg, std::vector<double>& f,
                  std::vector<double>& g, std::vector<double>& gamma) {
  const double eps = cfg.epsilon;
  const double kappa = cfg.rho / (cfg.rho + eps);

  // Column access lists.
  std::vector<std::vector<int>> col_entries(cands.n_target);
  std::vector<int> entry_row(cands.size());
  for (int i = 0; i < cands.n_source; ++i) {
    for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
      col_entries[cands.target_index[e]].push_back(e);
      entry_row[e] = i;
    }
  }

  auto update_gamma = [&]() {
    for (size_t e = 0; e < cands.size(); ++e) {
      gamma[e] =
          std::exp((f[entry_row[e]] + g[cands.target_index[e]] - cost[e]) / eps);
    }
  };

  double prev_viol = kInf;
  for (int it = 0; it < cfg.sinkhorn_max_iters; ++it) {
    for (int i = 0; i < cands.n_source; ++i) {
      if (cands.row_ptr[i] == cands.row_ptr[i + 1]) continue;
      if (cands.mu[i] <= 0.0) {
        f[i] = -kInf;
        continue;
      }
      double mx = -kInf;
      for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
        mx = std::max(mx, (g[cands.target_index[e]] - cost[e]) / eps);
      }
      double s = 0.0;
      for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
        s += std::exp((g[cands.target_index[e]] - cost[e]) / eps - mx);
      }
      const double lse = mx + std::log(s);
      f[i] = kappa * (eps * std::log(cands.mu[i]) - eps * lse);
    }
    for (int j = 0; j < cands.n_target; ++j) {
      if (col_entries[j].empty()) continue;
      if (cands.nu[j] <= 0.0) {
        g[j] = -kInf;
        continue;
      }
      double mx = -kInf;
      for (int e : col_entries[j]) {
        mx = std::max(mx, (f[entry_row[e]] - cost[e]) / eps);
      }
      double s = 0.0;
      for (int e : col_entries[j]) {
        s += std::exp((f[entry_row[e]] - cost[e]) / eps - mx);
      }
      const double lse = mx + std::log(s);
      g[j] = kappa * (eps * std::log(cands.nu[j]) - eps * lse);
    }

    update_gamma();
    double viol = 0.0;
    std::vector<double> rm(cands.n_source, 0.0), cm(cands.n_target, 0.0);
    for (size_t e = 0; e < cands.size(); ++e) {
      rm[entry_row[e]] += gamma[e];
      cm[cands.target_index[e]] += gamma[e];
    }
    for (int i = 0; i < cands.n_source; ++i) {
      if (cands.row_ptr[i] != cands.row_ptr[i + 1]) {
        viol = std::max(viol, std::abs(rm[i] - cands.mu[i]));
      }
    }
    for (int j = 0; j < cands.n_target; ++j) {
      if (!col_entries[j].empty()) {
        viol = std::max(viol, std::abs(cm[j] - cands.nu[j]));
      }
    }
    if (std::abs(viol - prev_viol) < cfg.sinkhorn_tol) break;
    prev_viol = viol;
  }
  update_gamma();
}

// Linearized context term: effective extra cost on entry (i, j) from the
// neighbors' current plan mass. Neighbor iteration covers both edge ends,
// doubling each undirected edge as the gradient of the bilinear term requires.
std::vector<double> context_costs(const CandidateSet& cands,
                                  const FeatureGraph& source_graph,
                                  const FeatureGraph& target_graph,
                                  const std::vector<double>& gamma) {
  std::vector<double> ctx(cands.size(), 0.0);
  const auto adj = source_graph.adjacency();
  for (int i = 0; i < cands.n_source; ++i) {
    for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
      const int j = cands.target_index[e];
      double acc = 0.0;
      for (int i2 : adj[i]) {
        for (int e2 = cands.row_ptr[i2]; e2 < cands.row_ptr[i2 + 1]; ++e2) {
          if (gamma[e2] <= 0.0) continue;
          acc += gamma[e2] *
                 relational_penalty(source_graph.nodes[i], source_graph.nodes[i2],
                                    target_graph.nodes[j],
                                    target_graph.nodes[cands.target_index[e2]]);
        }
      }
      ctx[e] = acc;
    }
  }
  return ctx;
}

}  // namespace

TransportPlan solve_uot(const CandidateSet& cands,
                        const FeatureGraph& source_graph,
                        const FeatureGraph& target_graph,
                        const MatchConfig& cfg) {
  TransportPlan plan;
  plan.n_source = cands.n_source;
  plan.n_target = cands.n_target;
  if (cands.size() == 0) return plan;
  if (cfg.greedy) return greedy_plan(cands);

  std::vector<double> f(cands.n_source, 0.0), g(cands.n_target, 0.0);
  std::vector<double> gamma(cands.size(), 0.0);

  sinkhorn_log(cands, cands.cost, cfg, f, g, gamma);
  plan.gamma = gamma;

  if (cfg.beta > 0.0 && !source_graph.edges.empty() &&
      cfg.outer_max_iters > 0) {
    double best_obj = plan_objective(plan, cands, source_graph, target_graph, cfg);
    std::vector<double> eff(cands.size());
    for (int s = 0; s < cfg.outer_max_iters; ++s) {
      const auto ctx = context_costs(cands, source_graph, target_graph, gamma);
      for (size_t e = 0; e < cands.size(); ++e) {
        eff[e] = cands.cost[e] + cfg.beta * ctx[e];
      }
      std::vector<double> prev = gamma;
      sinkhorn_log(cands, eff, cfg, f, g, gamma);

      TransportPlan candidate;
      candidate.n_source = plan.n_source;
      candidate.n_target = plan.n_target;
      candidate.gamma = gamma;
      const double obj =
          plan_objective(candidate, cands, source_graph, target_graph, cfg);
      if (obj < best_obj) {
        best_obj = obj;
        plan.gamma = gamma;
      }
      double change = 0.0;
      for (size_t e = 0; e < cands.size(); ++e) {
        change = std::max(change, std::abs(gamma[e] - prev[e]));
      }
      if (change < cfg.sinkhorn_tol) break;
    }
  }
  return plan;
}

double plan_objective(const TransportPlan& plan, const CandidateSet& cands,
                      const FeatureGraph& source_graph,
                      const FeatureGraph& target_graph,
                      const MatchConfig& cfg) {
  // An empty plan over a nonempty candidate set evaluates as all-zero gamma.
  std::vector<double> zero;
  const std::vector<double>* gm = &plan.gamma;
  if (plan.gamma.size() != cands.size()) {
    zero.assign(cands.size(), 0.0);
    gm = &zero;
  }
  const std::vector<double>& gamma = *gm;

  double linear = 0.0, entropy = 0.0;
  for (size_t e = 0; e < gamma.size(); ++e) {
    const double ge = gamma[e];
    linear += ge * cands.cost[e];
    if (ge > 0.0) entropy += ge * std::log(ge) - ge;
  }

  double rel = 0.0;
  if (cfg.beta > 0.0) {
    for (const auto& [a, b] : source_graph.edges) {
      for (int e = cands.row_ptr[a]; e < cands.row_ptr[a + 1]; ++e) {
        if (gamma[e] <= 0.0) continue;
        for (int e2 = cands.row_ptr[b]; e2 < cands.row_ptr[b + 1]; ++e2) {
          if (gamma[e2] <= 0.0) continue;
          rel += gamma[e] * gamma[e2] *
                 relational_penalty(source_graph.nodes[a], source_graph.nodes[b],
                                    target_graph.nodes[cands.target_index[e]],
                                    target_graph.nodes[cands.target_index[e2]]);
        }
      }
    }
  }

  auto kl = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      if (a[i] > 0.0) {
        s += a[i] * std::log(a[i] / b[i]) - a[i] + b[i];
      } else {
        s += b[i];
      }
    }
    return s;
  };
  std::vector<double> rm(cands.n_source, 0.0), cm(cands.n_target, 0.0);
  for (int i = 0; i < cands.n_source; ++i) {
    for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
      rm[i] += gamma[e];
      cm[cands.target_index[e]] += gamma[e];
    }
  }
  const double mass_term = kl(rm, cands.mu) + kl(cm, cands.nu);

  return linear + cfg.beta * rel + cfg.rho * mass_term + cfg.epsilon * entropy;
}

std::string serialize_plan(const TransportPlan& plan,
                           const CandidateSet& cands) {
  std::string out;
  char buf[128];
  for (int i = 0; i < cands.n_source; ++i) {
    for (int e = cands.row_ptr[i]; e < cands.row_ptr[i + 1]; ++e) {
      std::snprintf(buf, sizeof(buf), "%d %d %.9g %.9g\n", i,
                    cands.target_index[e], plan.gamma[e], cands.cost[e]);
      out += buf;
    }
  }
  return out;
}

}  // namespace graphloc
