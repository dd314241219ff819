#include "graphloc/frontend.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>

namespace graphloc {

namespace {
constexpr double kPi = 3.14159265358979323846;

struct LineFit {
  Vec2 centroid = Vec2::Zero();
  Vec2 direction = Vec2(1, 0);
  double rms = 0.0;
};

LineFit fit_line_tls(const std::vector<Vec2>& pts,
                     const std::vector<int>& idx) {
  LineFit fit;
  const int n = static_cast<int>(idx.size());
  Vec2 mean = Vec2::Zero();
  for (int i : idx) mean += pts[i];
  mean /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i : idx) {
    const Vec2 d = pts[i] - mean;
    sxx += d.x() * d.x();
    sxy += d.x() * d.y();
    syy += d.y() * d.y();
  }
  sxx /= n;
  sxy /= n;
  syy /= n;
  // Principal axis of the 2x2 covariance.
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  const double l_major = tr / 2.0 + disc;
  const double l_minor = tr / 2.0 - disc;
  Vec2 dir;
  if (std::abs(sxy) > 1e-15) {
    dir = Vec2(l_major - syy, sxy);
  } else {
    dir = sxx >= syy ? Vec2(1, 0) : Vec2(0, 1);
  }
  fit.centroid = mean;
  fit.direction = canonical_direction(dir);
  fit.rms = std::sqrt(std::max(0.0, l_minor));
  return fit;
}

int ray_sector(int ray, int ray_count, int sectors) {
  return static_cast<int>(static_cast<long long>(ray) * sectors / ray_count);
}

int cyclic_ray_distance(int a, int b, int n, bool cyclic) {
  int d = std::abs(a - b);
  if (cyclic) d = std::min(d, n - d);
  return d;
}

double undirected_angle(const Vec2& a, const Vec2& b) {
  return std::acos(std::clamp(std::abs(a.dot(b)), 0.0, 1.0));
}
}  // namespace

std::vector<Vec2> scan_points(const Scan& scan, const SensorModel& sensor) {
  std::vector<Vec2> pts(scan.ranges.size(), Vec2::Zero());
  for (size_t i = 0; i < scan.ranges.size(); ++i) {
    if (!scan.valid[i]) continue;
    const double a = sensor.azimuth(static_cast<int>(i));
    pts[i] = scan.ranges[i] * Vec2(std::cos(a), std::sin(a));
  }
  return pts;
}

std::vector<PointFeature> extract_short_features(const Scan& scan,
                                                 const SensorModel& sensor,
                                                 const FrontendConfig& cfg) {
  const int n = static_cast<int>(scan.ranges.size());
  const int w = cfg.curvature_window;
  if (n == 0 || 2 * w + 1 > n) return {};
  const bool cyclic = sensor.full_circle();
  const auto pts = scan_points(scan, sensor);

  // Curvature score where the full window is valid and free of range jumps.
  std::vector<double> score(n, -1.0);
  for (int i = 0; i < n; ++i) {
    if (!scan.valid[i]) continue;
    if (!cyclic && (i < w || i >= n - w)) continue;
    bool ok = true;
    Vec2 sum = Vec2::Zero();
    for (int o = -w; o <= w && ok; ++o) {
      const int j = cyclic ? (i + o + n) % n : i + o;
      if (!scan.valid[j]) {
        ok = false;
        break;
      }
      if (o < w) {
        const int jn = cyclic ? (i + o + 1 + n) % n : i + o + 1;
        if (std::abs(scan.ranges[jn] - scan.ranges[j]) > cfg.gap_threshold) {
          ok = false;
          break;
        }
      }
      if (o != 0) sum += pts[j] - pts[i];
    }
    if (!ok) continue;
    score[i] = sum.norm() / (2.0 * w * scan.ranges[i]);
  }

  // Local maxima above threshold, ties toward the lower index.
  std::vector<int> candidates;
  for (int i = 0; i < n; ++i) {
    if (score[i] < cfg.edge_threshold) continue;
    bool is_max = true;
    for (int o = -w; o <= w && is_max; ++o) {
      if (o == 0) continue;
      const int j = cyclic ? (i + o + n) % n : i + o;
      if (j < 0 || j >= n) continue;
      if (score[j] > score[i] || (score[j] == score[i] && j < i)) is_max = false;
    }
    if (is_max) candidates.push_back(i);
  }

  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });

  std::vector<int> accepted;
  for (int i : candidates) {
    if (static_cast<int>(accepted.size()) >= cfg.max_points) break;
    bool spaced = true;
    for (int j : accepted) {
      if (cyclic_ray_distance(i, j, n, cyclic) < cfg.min_separation_rays) {
        spaced = false;
        break;
      }
    }
    if (spaced) accepted.push_back(i);
  }
  std::sort(accepted.begin(), accepted.end());

  std::vector<PointFeature> out;
  out.reserve(accepted.size());
  for (int i : accepted) out.push_back(PointFeature{pts[i], cfg.observed_weight});
  return out;
}

namespace {

// Contiguous runs split at range discontinuities. Up to max_invalid_skip
// missing returns are bridged when the range stays continuous across them;
// the wrap seam of a full-circle scan joins the last and first runs.
std::vector<std::vector<int>> contiguous_runs(const Scan& scan,
                                              const SensorModel& sensor,
                                              const FrontendConfig& cfg) {
  const int n = static_cast<int>(scan.ranges.size());
  const double gap = cfg.gap_threshold;
  std::vector<std::vector<int>> runs;
  std::vector<int> cur;
  for (int i = 0; i < n; ++i) {
    if (!scan.valid[i]) continue;
    if (!cur.empty()) {
      const int back = cur.back();
      const bool contiguous =
          i - back <= cfg.max_invalid_skip + 1 &&
          std::abs(scan.ranges[i] - scan.ranges[back]) <= gap;
      if (!contiguous) {
        runs.push_back(std::move(cur));
        cur.clear();
      }
    }
    cur.push_back(i);
  }
  if (!cur.empty()) runs.push_back(std::move(cur));

  if (sensor.full_circle() && runs.size() >= 2) {
    const int head = runs.front().front();
    const int tail = runs.back().back();
    if (head + (n - 1 - tail) <= cfg.max_invalid_skip &&
        std::abs(scan.ranges[head] - scan.ranges[tail]) <= gap) {
      auto merged = runs.back();
      merged.insert(merged.end(), runs.front().begin(), runs.front().end());
      runs.front() = std::move(merged);
      runs.pop_back();
    }
  }
  return runs;
}

void split_fit_recursive(const std::vector<Vec2>& pts, std::vector<int> group,
                         const FrontendConfig& cfg, int sector,
                         std::vector<SectorFit>& out) {
  if (static_cast<int>(group.size()) < cfg.min_line_points) return;
  const LineFit fit = fit_line_tls(pts, group);

  const Vec2 normal(-fit.direction.y(), fit.direction.x());
  double worst = 0.0;
  for (int r : group) {
    worst = std::max(worst, std::abs(normal.dot(pts[r] - fit.centroid)));
  }
  int split = -1;
  double split_dev = -1.0;
  for (size_t t = 1; t + 1 < group.size(); ++t) {
    const double d = std::abs(normal.dot(pts[group[t]] - fit.centroid));
    if (d > split_dev) {
      split_dev = d;
      split = static_cast<int>(t);
    }
  }

  if (fit.rms < cfg.max_line_rms && worst < cfg.max_line_dev) {
    SectorFit sf;
    sf.sector_index = sector;
    sf.first_ray = group.front();
    sf.last_ray = group.back();
    sf.direction = fit.direction;
    sf.anchor = fit.centroid;
    sf.rms_residual = fit.rms;
    sf.inlier_rays = std::move(group);
    out.push_back(std::move(sf));
    return;
  }
  if (static_cast<int>(group.size()) < cfg.min_line_points + 2) return;
  if (split <= 0) return;
  std::vector<int> left(group.begin(), group.begin() + split + 1);
  std::vector<int> right(group.begin() + split, group.end());
  split_fit_recursive(pts, std::move(left), cfg, sector, out);
  split_fit_recursive(pts, std::move(right), cfg, sector, out);
}

struct Chain {
  std::vector<int> rays;
  LineFit fit;
};

}  // namespace

std::vector<SectorFit> compute_sector_fits(const Scan& scan,
                                           const SensorModel& sensor,
                                           const FrontendConfig& cfg) {
  const int n = static_cast<int>(scan.ranges.size());
  if (n == 0) return {};
  const auto pts = scan_points(scan, sensor);
  const auto runs = contiguous_runs(scan, sensor, cfg);

  std::vector<SectorFit> fits;
  for (const auto& run : runs) {
    // Slice the run at sector boundaries.
    size_t start = 0;
    for (size_t i = 1; i <= run.size(); ++i) {
      const bool boundary =
          i == run.size() ||
          ray_sector(run[i], n, cfg.sectors) !=
              ray_sector(run[start], n, cfg.sectors);
      if (!boundary) continue;
      std::vector<int> piece(run.begin() + start, run.begin() + i);
      split_fit_recursive(pts, std::move(piece), cfg,
                          ray_sector(run[start], n, cfg.sectors), fits);
      start = i;
    }
  }
  std::sort(fits.begin(), fits.end(), [](const SectorFit& a, const SectorFit& b) {
    return a.first_ray < b.first_ray;
  });
  return fits;
}

namespace {

bool chains_compatible(const std::vector<Vec2>& pts, const Chain& chain,
                       const SectorFit& fit, const FrontendConfig& cfg,
                       bool wrap_check) {
  const double max_angle = cfg.merge_angle_deg * kPi / 180.0;
  if (undirected_angle(chain.fit.direction, fit.direction) >= max_angle)
    return false;
  const Vec2 nc(-chain.fit.direction.y(), chain.fit.direction.x());
  const Vec2 nf(-fit.direction.y(), fit.direction.x());
  if (std::abs(nc.dot(fit.anchor - chain.fit.centroid)) >= cfg.merge_offset)
    return false;
  if (std::abs(nf.dot(chain.fit.centroid - fit.anchor)) >= cfg.merge_offset)
    return false;
  const Vec2 tail = wrap_check ? pts[chain.rays.front()] : pts[chain.rays.back()];
  const Vec2 head = wrap_check ? pts[fit.inlier_rays.back()]
                               : pts[fit.inlier_rays.front()];
  return (head - tail).norm() < cfg.merge_gap;
}

LineFeature chain_to_line(const std::vector<Vec2>& pts, const Chain& chain,
                          double weight) {
  double lo = std::numeric_limits<double>::max(), hi = -lo;
  for (int r : chain.rays) {
    const double t = chain.fit.direction.dot(pts[r] - chain.fit.centroid);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  return LineFeature::make(chain.fit.centroid, chain.fit.direction,
                           (hi - lo) / 2.0,
                           static_cast<int>(chain.rays.size()), weight);
}

}  // namespace

std::vector<LineFeature> extract_long_lines(const Scan& scan,
                                            const SensorModel& sensor,
                                            const FrontendConfig& cfg) {
  const auto pts = scan_points(scan, sensor);
  const auto fits = compute_sector_fits(scan, sensor, cfg);
  if (fits.empty()) return {};

  std::vector<Chain> chains;
  for (const auto& fit : fits) {
    bool merged = false;
    if (!chains.empty()) {
      Chain& last = chains.back();
      if (chains_compatible(pts, last, fit, cfg, false)) {
        std::vector<int> merged_rays = last.rays;
        merged_rays.insert(merged_rays.end(), fit.inlier_rays.begin(),
                           fit.inlier_rays.end());
        const LineFit refit = fit_line_tls(pts, merged_rays);
        if (refit.rms < cfg.max_line_rms) {
          last.rays = std::move(merged_rays);
          last.fit = refit;
          merged = true;
        }
      }
    }
    if (!merged) {
      Chain c;
      c.rays = fit.inlier_rays;
      c.fit = fit_line_tls(pts, c.rays);
      chains.push_back(std::move(c));
    }
  }

  // A full-circle scan can wrap one structure across the seam.
  if (sensor.full_circle() && chains.size() >= 2) {
    Chain& first = chains.front();
    const Chain& last = chains.back();
    SectorFit pseudo;
    pseudo.direction = last.fit.direction;
    pseudo.anchor = last.fit.centroid;
    pseudo.inlier_rays = last.rays;
    if (chains_compatible(pts, first, pseudo, cfg, true)) {
      std::vector<int> merged_rays = last.rays;
      merged_rays.insert(merged_rays.end(), first.rays.begin(),
                         first.rays.end());
      const LineFit refit = fit_line_tls(pts, merged_rays);
      if (refit.rms < cfg.max_line_rms) {
        first.rays = std::move(merged_rays);
        first.fit = refit;
        chains.pop_back();
      }
    }
  }

  std::vector<LineFeature> lines;
  for (const auto& chain : chains) {
    if (static_cast<int>(chain.rays.size()) < cfg.min_line_points) continue;
    if (chain.fit.rms >= cfg.max_line_rms) continue;
    lines.push_back(chain_to_line(pts, chain, cfg.observed_weight));
  }
  return lines;
}

std::vector<HypothesisFeature> infer_structural_hypotheses(
    const std::vector<LineFeature>& lines, const FrontendConfig& cfg) {
  std::vector<HypothesisFeature> out;
  const double angle_lo = cfg.junction_angle_lo_deg * kPi / 180.0;

  // (a) hidden junction cues from pairs of stable, clearly non-parallel lines.
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].support_count < cfg.stable_support) continue;
    for (size_t j = i + 1; j < lines.size(); ++j) {
      if (lines[j].support_count < cfg.stable_support) continue;
      const Vec2& di = lines[i].direction;
      const Vec2& dj = lines[j].direction;
      if (undirected_angle(di, dj) < angle_lo) continue;
      const double denom = di.x() * dj.y() - di.y() * dj.x();
      if (std::abs(denom) < 1e-12) continue;
      const Vec2 rel = lines[j].anchor - lines[i].anchor;
      const double s = (rel.x() * dj.y() - rel.y() * dj.x()) / denom;
      const double u = (rel.x() * di.y() - rel.y() * di.x()) / denom;
      if (std::abs(s) > lines[i].half_length + cfg.extension_limit) continue;
      if (std::abs(u) > lines[j].half_length + cfg.extension_limit) continue;
      const Vec2 x = lines[i].anchor + s * di;
      out.push_back(HypothesisFeature{PointFeature{x, cfg.inferred_weight},
                                      HypothesisKind::inferred_corner,
                                      cfg.inferred_weight});
    }
  }

  // (c) Manhattan completion when every direction falls in one cluster.
  if (cfg.manhattan_enabled && !lines.empty()) {
    const double parallel = cfg.parallel_angle_deg * kPi / 180.0;
    bool single_cluster = true;
    for (size_t i = 0; i + 1 < lines.size() && single_cluster; ++i) {
      for (size_t j = i + 1; j < lines.size(); ++j) {
        if (undirected_angle(lines[i].direction, lines[j].direction) >=
            parallel) {
          single_cluster = false;
          break;
        }
      }
    }
    if (single_cluster) {
      // Dominant line = most supported; anchor at the farthest support end.
      size_t dom = 0;
      for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].support_count > lines[dom].support_count) dom = i;
      }
      const Vec2 dir = lines[dom].direction;
      Vec2 far_end = Vec2::Zero();
      double best = -1.0;
      for (const auto& ln : lines) {
        for (const Vec2& e : {ln.endpoint_a(), ln.endpoint_b()}) {
          const double proj = std::abs(dir.dot(e));
          if (proj > best) {
            best = proj;
            far_end = e;
          }
        }
      }
      const LineFeature ortho = LineFeature::make(
          far_end, Vec2(-dir.y(), dir.x()), 1.0, 0, cfg.inferred_weight);
      out.push_back(HypothesisFeature{ortho, HypothesisKind::inferred_orthogonal,
                                      cfg.inferred_weight});
    }
  }
  return out;
}

std::vector<FeatureNode> fuse_and_filter(
    const std::vector<PointFeature>& points,
    const std::vector<LineFeature>& lines,
    const std::vector<HypothesisFeature>& hypotheses,
    const FrontendConfig& cfg) {
  std::vector<LineFeature> kept_lines;
  for (const auto& ln : lines) {
    if (ln.support_count >= cfg.min_line_points) kept_lines.push_back(ln);
  }

  std::vector<Vec2> corner_hints;
  for (const auto& h : hypotheses) {
    if (h.kind == HypothesisKind::inferred_corner) {
      corner_hints.push_back(std::get<PointFeature>(h.base).position);
    }
  }

  auto supported = [&](const Vec2& p) {
    for (const auto& ln : kept_lines) {
      const Vec2 ext = (ln.half_length + cfg.extension_limit) * ln.direction;
      if (point_segment_distance(p, ln.anchor - ext, ln.anchor + ext) <
          cfg.support_distance) {
        return true;
      }
    }
    for (const auto& c : corner_hints) {
      if ((p - c).norm() < cfg.support_distance) return true;
    }
    return false;
  };

  std::vector<FeatureNode> point_nodes;
  for (const auto& pt : points) {
    if (supported(pt.position)) point_nodes.emplace_back(pt);
  }
  // Junction hypotheses only stand in for corners that were not observed.
  for (const auto& h : hypotheses) {
    if (h.kind != HypothesisKind::inferred_corner) continue;
    const Vec2 c = std::get<PointFeature>(h.base).position;
    bool duplicate = false;
    for (const auto& node : point_nodes) {
      if ((representative(node) - c).norm() < cfg.support_distance) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) point_nodes.push_back(h.base);
  }

  std::vector<FeatureNode> line_nodes;
  for (const auto& ln : kept_lines) line_nodes.emplace_back(ln);
  for (const auto& h : hypotheses) {
    if (h.kind == HypothesisKind::inferred_orthogonal)
      line_nodes.push_back(h.base);
  }

  auto by_angle = [](const FeatureNode& a, const FeatureNode& b) {
    const Vec2 pa = representative(a), pb = representative(b);
    const double aa = std::atan2(pa.y(), pa.x()), ab = std::atan2(pb.y(), pb.x());
    if (aa != ab) return aa < ab;
    const double na = pa.norm(), nb = pb.norm();
    if (na != nb) return na < nb;
    return pa.x() < pb.x();
  };
  std::stable_sort(point_nodes.begin(), point_nodes.end(), by_angle);
  std::stable_sort(line_nodes.begin(), line_nodes.end(), by_angle);

  std::vector<FeatureNode> out = std::move(point_nodes);
  out.insert(out.end(), line_nodes.begin(), line_nodes.end());
  return out;
}

FeatureGraph build_observation_graph(std::vector<FeatureNode> features, int k) {
  return build_knn_graph(std::move(features), k);
}

std::string serialize_features(const std::vector<FeatureNode>& features) {
  std::string out;
  char buf[160];
  for (const auto& node : features) {
    if (const auto* pt = std::get_if<PointFeature>(&node)) {
      std::snprintf(buf, sizeof(buf), "pt %.6f %.6f %.3f\n", pt->position.x(),
                    pt->position.y(), pt->weight);
    } else {
      const auto& ln = std::get<LineFeature>(node);
      std::snprintf(buf, sizeof(buf), "ln %.6f %.6f %.6f %.6f %.6f %.3f\n",
                    ln.anchor.x(), ln.anchor.y(), ln.direction.x(),
                    ln.direction.y(), ln.half_length, ln.weight);
    }
    out += buf;
  }
  return out;
}

FeatureGraph extract_observation_graph(const Scan& scan,
                                       const SensorModel& sensor,
                                       const FrontendConfig& cfg, int k) {
  const auto points = extract_short_features(scan, sensor, cfg);
  const auto lines = extract_long_lines(scan, sensor, cfg);
  const auto hypotheses = infer_structural_hypotheses(lines, cfg);
  return build_observation_graph(fuse_and_filter(points, lines, hypotheses, cfg),
                                 k);
}

}  // namespace graphloc
