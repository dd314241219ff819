#pragma once

#include <optional>
#include <vector>

#include "graphloc/geometry.hpp"
#include "graphloc/prior_map.hpp"

namespace graphloc {

struct MatchConfig {
  double beta = 0.5;     // context coupling weight
  double rho = 1.0;      // KL mass-relaxation weight
  double epsilon = 0.05; // entropic weight
  double total_mass = 0.0;  // shared mass m; <= 0 means min(|Vx|, |Vy|)
  double w_theta = 2.0;
  double w_perp = 1.0;
  double w_par = 0.25;
  double gate_radius = 3.0;  // meters
  int top_k = 6;
  int sinkhorn_max_iters = 200;
  int outer_max_iters = 5;
  double sinkhorn_tol = 1e-7;
  bool greedy = false;  // nearest-neighbor ablation instead of the UOT solve
};

// Sparse candidate pairs in CSR-by-source layout, with the node masses the
// solver relaxes against.
struct CandidateSet {
  int n_source = 0;
  int n_target = 0;
  std::vector<int> row_ptr;       // size n_source + 1
  std::vector<int> target_index;  // per entry
  std::vector<double> cost;       // per entry, cost at the build pose
  std::vector<double> mu;         // per source node
  std::vector<double> nu;         // per target node
  int empty_sources = 0;          // sources that gated out entirely

  size_t size() const { return target_index.size(); }
};

struct TransportPlan {
  std::vector<double> gamma;  // aligned with CandidateSet entries
  int n_source = 0;
  int n_target = 0;

  bool empty() const { return gamma.empty(); }
  double total_mass() const;
};

std::vector<double> row_marginals(const TransportPlan& plan,
                                  const CandidateSet& cands);
std::vector<double> column_marginals(const TransportPlan& plan,
                                     const CandidateSet& cands);

// Type-dependent geometric cost of matching a (sensor-frame) source node to
// a (map-frame) target node under the given pose. Absent for the disallowed
// line -> point channel.
std::optional<double> pair_cost(const FeatureNode& source,
                                const FeatureNode& target, const Pose2& pose,
                                const MatchConfig& cfg);

// Gating proximity: distance from the transformed source representative to
// the target feature as a set (segment for line targets).
double gate_distance(const FeatureNode& source, const FeatureNode& target,
                     const Pose2& pose);

CandidateSet build_candidates(const FeatureGraph& source_graph,
                              const FeatureGraph& target_graph,
                              const Pose2& pose, const MatchConfig& cfg);
CandidateSet build_candidates(const FeatureGraph& source_graph,
                              const VisibleSubgraph& target, const Pose2& pose,
                              const MatchConfig& cfg);

// Second-order consistency penalty: squared intra-graph distance difference
// for point pairs, squared intra-graph angle difference for line pairs,
// zero for mixed types.
double relational_penalty(const FeatureNode& source_a,
                          const FeatureNode& source_b,
                          const FeatureNode& target_a,
                          const FeatureNode& target_b);

// Unbalanced entropic solve with outer linearization of the context term.
// Log-domain scaling throughout. Returns the best iterate by objective.
TransportPlan solve_uot(const CandidateSet& cands,
                        const FeatureGraph& source_graph,
                        const FeatureGraph& target_graph,
                        const MatchConfig& cfg);

// Hard nearest-candidate assignment used by the matching ablation.
TransportPlan greedy_plan(const CandidateSet& cands);

// Direct evaluation of the matching objective for a given plan.
double plan_objective(const TransportPlan& plan, const CandidateSet& cands,
                      const FeatureGraph& source_graph,
                      const FeatureGraph& target_graph,
                      const MatchConfig& cfg);

// Debug dump: one "i j gamma cost" line per entry.
std::string serialize_plan(const TransportPlan& plan, const CandidateSet& cands);

}  // namespace graphloc
