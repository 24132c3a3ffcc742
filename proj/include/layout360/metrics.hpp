#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "layout360/core.hpp"
#include "layout360/geometry.hpp"

// Layout evaluation metrics: 3D/2D IoU, corner error, pixel error, and the
// two depth metrics (RMSE, delta_1).

namespace layout360 {

// Rescales a layout so its camera height equals `h_cam` (angle-space
// quantities are scale-free; metric-space ones need a common normalization).
inline ManhattanLayout normalize_camera_height(const ManhattanLayout& l,
                                               double h_cam = kCanonicalCameraHeight) {
  double s = h_cam / l.h_cam;
  ManhattanLayout out = l;
  for (Vec2& p : out.floor) {
    p.x *= s;
    p.z *= s;
  }
  out.h_cam *= s;
  out.h_ceil *= s;
  return out;
}

namespace detail {

// Exact intersection/union areas for a pair of rectilinear polygons via the
// arrangement of their vertex coordinates: every grid cell is entirely inside
// or outside each polygon.
inline void rectilinear_overlap(const std::vector<Vec2>& a,
                                const std::vector<Vec2>& b, double* inter,
                                double* uni) {
  std::vector<double> xs, zs;
  for (const Vec2& p : a) { xs.push_back(p.x); zs.push_back(p.z); }
  for (const Vec2& p : b) { xs.push_back(p.x); zs.push_back(p.z); }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(zs.begin(), zs.end());
  zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
  double ai = 0, au = 0;
  for (size_t i = 0; i + 1 < xs.size(); ++i) {
    for (size_t k = 0; k + 1 < zs.size(); ++k) {
      double cx = 0.5 * (xs[i] + xs[i + 1]);
      double cz = 0.5 * (zs[k] + zs[k + 1]);
      bool in_a = point_in_polygon(a, cx, cz);
      bool in_b = point_in_polygon(b, cx, cz);
      if (!in_a && !in_b) continue;
      double cell = (xs[i + 1] - xs[i]) * (zs[k + 1] - zs[k]);
      if (in_a && in_b) ai += cell;
      au += cell;
    }
  }
  *inter = ai;
  *uni = au;
}

// O(n^3) Hungarian assignment on a square cost matrix; returns the minimum
// total cost.
inline double hungarian(const std::vector<std::vector<double>>& cost) {
  int n = int(cost.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
        if (minv[j] < delta) { delta = minv[j]; j1 = j; }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
        else minv[j] -= delta;
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0;
  for (int j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
  return total;
}

}  // namespace detail

inline double iou2d(const ManhattanLayout& pred, const ManhattanLayout& gt) {
  if (std::abs(polygon_area(pred.floor)) < 1e-12 ||
      std::abs(polygon_area(gt.floor)) < 1e-12)
    throw GeometryError("degenerate floor polygon");
  double inter, uni;
  detail::rectilinear_overlap(pred.floor, gt.floor, &inter, &uni);
  return uni > 0 ? 100.0 * inter / uni : 0.0;
}

inline double iou3d(const ManhattanLayout& pred, const ManhattanLayout& gt) {
  double inter_area, union_area;
  if (std::abs(polygon_area(pred.floor)) < 1e-12 ||
      std::abs(polygon_area(gt.floor)) < 1e-12)
    throw GeometryError("degenerate floor polygon");
  detail::rectilinear_overlap(pred.floor, gt.floor, &inter_area, &union_area);
  // Vertical extent relative to the camera: [-h_cam, h_ceil - h_cam].
  double lo = std::max(-pred.h_cam, -gt.h_cam);
  double hi = std::min(pred.h_ceil - pred.h_cam, gt.h_ceil - gt.h_cam);
  double v_inter = inter_area * std::max(0.0, hi - lo);
  double v_pred = std::abs(polygon_area(pred.floor)) * pred.h_ceil;
  double v_gt = std::abs(polygon_area(gt.floor)) * gt.h_ceil;
  double v_union = v_pred + v_gt - v_inter;
  return v_union > 0 ? 100.0 * v_inter / v_union : 0.0;
}

// Image-space corner points of an annotation: one (j, i) pixel per ceiling
// corner and one per floor corner.
inline std::vector<std::pair<double, double>> corner_pixels(
    const CornerAnnotation& ann, int h, int w) {
  std::vector<std::pair<double, double>> pts;
  for (const Corner& c : ann.corners) {
    double j = longitude_to_col(c.u, w);
    pts.push_back({j, latitude_to_row(c.vc, h)});
    pts.push_back({j, latitude_to_row(c.vf, h)});
  }
  return pts;
}

// Diagonal-normalized mean distance under minimum-cost bipartite matching;
// corners without a counterpart pay the full image diagonal.
inline double corner_error(const std::vector<std::pair<double, double>>& pred,
                           const std::vector<std::pair<double, double>>& gt,
                           int h, int w) {
  if (gt.empty()) throw std::invalid_argument("empty ground-truth corner set");
  double diag = std::sqrt(double(h) * h + double(w) * w);
  size_t n = std::max(pred.size(), gt.size());
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, diag));
  for (size_t a = 0; a < pred.size(); ++a)
    for (size_t b = 0; b < gt.size(); ++b)
      cost[a][b] = std::hypot(pred[a].first - gt[b].first,
                              pred[a].second - gt[b].second);
  double total = detail::hungarian(cost);
  return 100.0 * (total / double(n)) / diag;
}

inline double corner_error(const CornerAnnotation& pred,
                           const CornerAnnotation& gt, int h, int w) {
  return corner_error(corner_pixels(pred, h, w), corner_pixels(gt, h, w), h, w);
}

// Fraction (in percent) of pixels whose ceiling/wall/floor class differs.
inline double pixel_error(const BoundaryTarget& pred, const BoundaryTarget& gt,
                          int h, int w) {
  std::vector<uint8_t> sp = boundary_to_segmentation(pred, h, w);
  std::vector<uint8_t> sg = boundary_to_segmentation(gt, h, w);
  size_t diff = 0;
  for (size_t k = 0; k < sp.size(); ++k)
    if (sp[k] != sg[k]) ++diff;
  return 100.0 * double(diff) / double(sp.size());
}

struct DepthMetrics {
  double rmse = 0.0;
  double delta1 = 0.0;
};

inline DepthMetrics depth_metrics(const ManhattanLayout& pred,
                                  const ManhattanLayout& gt, int h, int w) {
  std::vector<double> dp = layout_to_depth(pred, h, w);
  std::vector<double> dg = layout_to_depth(gt, h, w);
  double se = 0.0;
  size_t ok = 0;
  for (size_t k = 0; k < dp.size(); ++k) {
    double d = dp[k] - dg[k];
    se += d * d;
    double ratio = std::max(dp[k] / dg[k], dg[k] / dp[k]);
    if (ratio <= 1.25 * (1.0 + 1e-9)) ++ok;  // inclusive threshold
  }
  DepthMetrics m;
  m.rmse = std::sqrt(se / double(dp.size()));
  m.delta1 = double(ok) / double(dp.size());
  return m;
}

struct MetricValues {
  double iou3d = 0.0;
  double iou2d = 0.0;
  double corner_error = 0.0;
  double pixel_error = 0.0;
  double rmse = 0.0;
  double delta1 = 0.0;
};

struct MetricStats {
  MetricValues mean;
  MetricValues stddev;
  int count = 0;
};

inline MetricStats aggregate_metrics(const std::vector<MetricValues>& vals) {
  MetricStats st;
  st.count = int(vals.size());
  if (vals.empty()) return st;
  auto each = [&](auto get, double MetricValues::*field) {
    double m = 0;
    for (const auto& v : vals) m += get(v);
    m /= double(vals.size());
    double s2 = 0;
    for (const auto& v : vals) s2 += (get(v) - m) * (get(v) - m);
    st.mean.*field = m;
    st.stddev.*field = vals.size() > 1 ? std::sqrt(s2 / double(vals.size() - 1)) : 0.0;
  };
  each([](const MetricValues& v) { return v.iou3d; }, &MetricValues::iou3d);
  each([](const MetricValues& v) { return v.iou2d; }, &MetricValues::iou2d);
  each([](const MetricValues& v) { return v.corner_error; }, &MetricValues::corner_error);
  each([](const MetricValues& v) { return v.pixel_error; }, &MetricValues::pixel_error);
  each([](const MetricValues& v) { return v.rmse; }, &MetricValues::rmse);
  each([](const MetricValues& v) { return v.delta1; }, &MetricValues::delta1);
  return st;
}

// Corner-count bucket label for the per-complexity breakdown.
inline std::string corner_bucket(size_t corner_count) {
  if (corner_count <= 4) return "4";
  if (corner_count <= 6) return "6";
  if (corner_count <= 8) return "8";
  return "10+";
}

struct MetricsReport {
  MetricStats overall;
  std::map<std::string, MetricStats> by_corner_count;
};

}  // namespace layout360
