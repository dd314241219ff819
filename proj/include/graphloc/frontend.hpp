#pragma once

#include <vector>

#include "graphloc/geometry.hpp"
#include "graphloc/scan_sim.hpp"

namespace graphloc {

struct FrontendConfig {
  // Short (edge-like) point features.
  int curvature_window = 5;       // W, rays each side
  double edge_threshold = 0.01;   // curvature score gate
  int max_points = 40;            // N_max per scan
  int min_separation_rays = 5;    // angular spacing enforcement

  // Sector-based long lines.
  int sectors = 16;
  double gap_threshold = 0.5;   // m, range discontinuity split
  int max_invalid_skip = 3;     // rays, dropouts bridged inside a run
  int min_line_points = 8;      // m_min
  double max_line_rms = 0.03;   // m, r_max
  double max_line_dev = 0.06;   // m, worst single-point deviation before a split
  double merge_angle_deg = 5.0;
  double merge_offset = 0.10;   // m, mutual perpendicular offset
  double merge_gap = 1.5;       // m, endpoint gap allowed across occlusions

  // Structural hypotheses.
  int stable_support = 12;            // s_min
  double junction_angle_lo_deg = 30.0;
  double extension_limit = 1.0;       // m, e_max
  double parallel_angle_deg = 10.0;
  bool manhattan_enabled = false;

  // Fusion.
  double support_distance = 0.10;  // m, d_support
  double inferred_weight = 0.3;
  double observed_weight = 1.0;
};

struct SectorFit {
  int sector_index = 0;
  int first_ray = 0;
  int last_ray = 0;
  Vec2 direction = Vec2(1, 0);
  Vec2 anchor = Vec2::Zero();
  double rms_residual = 0.0;
  std::vector<int> inlier_rays;
};

enum class HypothesisKind { observed, inferred_corner, inferred_orthogonal };

struct HypothesisFeature {
  FeatureNode base;
  HypothesisKind kind = HypothesisKind::observed;
  double weight = 1.0;
};

// Cartesian sensor-frame points for valid rays (index-aligned with the scan).
std::vector<Vec2> scan_points(const Scan& scan, const SensorModel& sensor);

std::vector<PointFeature> extract_short_features(const Scan& scan,
                                                 const SensorModel& sensor,
                                                 const FrontendConfig& cfg);

// Per-sector split-and-fit stage, exposed for inspection.
std::vector<SectorFit> compute_sector_fits(const Scan& scan,
                                           const SensorModel& sensor,
                                           const FrontendConfig& cfg);

std::vector<LineFeature> extract_long_lines(const Scan& scan,
                                            const SensorModel& sensor,
                                            const FrontendConfig& cfg);

std::vector<HypothesisFeature> infer_structural_hypotheses(
    const std::vector<LineFeature>& lines, const FrontendConfig& cfg);

std::vector<FeatureNode> fuse_and_filter(
    const std::vector<PointFeature>& points,
    const std::vector<LineFeature>& lines,
    const std::vector<HypothesisFeature>& hypotheses,
    const FrontendConfig& cfg);

FeatureGraph build_observation_graph(std::vector<FeatureNode> features, int k);

// Plot-ready dump: "pt x y w" and "ln ax ay dx dy hl w" lines.
std::string serialize_features(const std::vector<FeatureNode>& features);

// Full front end: scan -> observation graph.
FeatureGraph extract_observation_graph(const Scan& scan,
                                       const SensorModel& sensor,
                                       const FrontendConfig& cfg, int k);

}  // namespace graphloc
