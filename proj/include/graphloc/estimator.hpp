#pragma once

#include <Eigen/Core>

#include <array>
#include <string>
#include <vector>

#include "graphloc/frontend.hpp"
#include "graphloc/matching.hpp"
#include "graphloc/prior_map.hpp"
#include "graphloc/scan_sim.hpp"

namespace graphloc {

struct NormalSystem {
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  int residual_count = 0;
  double total_weight = 0.0;
};

struct DegeneracyState {
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // descending
  Eigen::Matrix3d basis = Eigen::Matrix3d::Identity();    // columns u_k
  std::array<bool, 3> weak = {false, false, false};

  int weak_count() const { return weak[0] + weak[1] + weak[2]; }
  bool any() const { return weak[0] || weak[1] || weak[2]; }
};

struct BufferedEvidence {
  Eigen::Matrix3d H;
  Eigen::Vector3d g;
  double stamp = 0.0;
};

// Cached per-frame information awaiting a delayed release. Oldest entries
// drop once capacity is reached.
struct EvidenceBuffer {
  std::vector<BufferedEvidence> entries;
  int capacity = 50;
  int dropped = 0;

  void push(const Eigen::Matrix3d& H, const Eigen::Vector3d& g, double stamp);
  void clear() { entries.clear(); }
  size_t size() const { return entries.size(); }
};

struct EstimatorConfig {
  double tau_lambda_rel = 0.02;   // relative weak-mode criterion
  double lambda_abs_floor = 1e-6; // lambda1 below this = no information at all
  double lambda_r = 1e6;          // damping, scaled by max(lambda1, 1) in track_step
  double huber_delta = 0.1;       // meters
  double rot_scale = 6.0;         // m/rad: yaw column of J expressed in
                                  // length-equivalent units (1 = raw radians)
  int max_gn_iters = 8;
  int buffer_capacity = 50;
  double step_tol = 1e-4;         // per-component increment threshold
  double max_step_trans = 1.0;    // meters, per-iteration correction clamp
  double max_step_rot = 0.5;      // radians
  bool delayed_enabled = true;    // ablation switch for the delayed update
  bool freeze_plan = false;       // reuse the first iteration's transport plan
  int coast_limit = 10;           // consecutive coast frames before lost
};

struct SolveResult {
  Twist2 delta;
  bool floored = false;  // a Tikhonov floor had to be applied
};

// Constant-velocity prediction: P_{t-1} * exp(log(P_{t-2}^-1 P_{t-1})).
Pose2 predict_cv(const Pose2& pose_prev, const Pose2& pose_prev2);

// Weighted Gauss-Newton normal equations from the transport plan, with Huber
// reweighting on residual norms. Jacobians are taken w.r.t. the
// right-multiplicative increment at the given pose.
NormalSystem build_normal_system(const TransportPlan& plan,
                                 const CandidateSet& cands,
                                 const FeatureGraph& source_graph,
                                 const FeatureGraph& target_graph,
                                 const Pose2& pose,
                                 const EstimatorConfig& cfg);

DegeneracyState detect_weak_directions(const Eigen::Matrix3d& H,
                                       const EstimatorConfig& cfg);

// Damped solve suppressing corrections along weak eigen-modes. With no weak
// modes this is exactly -H^-1 g.
SolveResult solve_masked(const Eigen::Matrix3d& H, const Eigen::Vector3d& g,
                         const DegeneracyState& deg, double lambda_r);
SolveResult solve_masked(const Eigen::Matrix3d& H, const Eigen::Vector3d& g,
                         const DegeneracyState& deg,
                         const EstimatorConfig& cfg);

// Aggregates buffered evidence with the current frame (buffer order, then
// current), solves the combined system, and empties the buffer.
SolveResult release_delayed(const Eigen::Matrix3d& H_t,
                            const Eigen::Vector3d& g_t,
                            EvidenceBuffer& buffer);

enum class TrackStatus { ok, coast, lost };
const char* to_string(TrackStatus s);

struct StepDiagnostics {
  double t = 0.0;
  Eigen::Vector3d lambda = Eigen::Vector3d::Zero();
  int weak_count = 0;
  int buffer_len = 0;
  double plan_mass = 0.0;
  int iters = 0;
  TrackStatus status = TrackStatus::ok;
  int obs_nodes = 0;
  int map_nodes = 0;
  Pose2 incremental;  // P_{t-1}^-1 * P_t
};

struct TrackerConfig {
  SensorModel sensor;
  FrontendConfig frontend;
  MatchConfig match;
  EstimatorConfig estimator;
  int graph_k = 4;
};

// Sequential per-scan pose tracker against a fixed map model. One instance
// per stream; instances are independent.
class Tracker {
 public:
  Tracker(const MapModel* map, TrackerConfig cfg, const Pose2& seed_prev2,
          const Pose2& seed_prev);
  Tracker(const MapModel* map, TrackerConfig cfg, const Pose2& seed);

  std::pair<Pose2, StepDiagnostics> track_step(const Scan& scan);

  const EvidenceBuffer& buffer() const { return buffer_; }
  bool lost() const { return lost_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  const MapModel* map_;
  TrackerConfig cfg_;
  Pose2 prev_, prev2_;
  EvidenceBuffer buffer_;
  int consecutive_coast_ = 0;
  bool lost_ = false;
};

// One diagnostics record per frame:
// t x y yaw lambda1 lambda2 lambda3 ndeg buflen planmass iters status
std::string serialize_diagnostics(const Pose2& pose, const StepDiagnostics& d);

}  // namespace graphloc
