#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "layout360/core.hpp"

namespace layout360 {

// Decay base of the corner-score channel: y_w[j] = decay^(distance to the
// nearest corner column).
inline constexpr double kCornerScoreDecay = 0.96;

// Default camera height (meters) when annotations carry no absolute scale.
inline constexpr double kCanonicalCameraHeight = 1.6;

namespace detail {

inline constexpr double kEps = 1e-12;

inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.z - a.z * b.x; }

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                               const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    double v = (q.x - p.x) * (r.z - p.z) - (q.z - p.z) * (r.x - p.x);
    return v > kEps ? 1 : (v < -kEps ? -1 : 0);
  };
  int o1 = orient(a, b, c), o2 = orient(a, b, d);
  int o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

}  // namespace detail

inline double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (size_t k = 0; k < poly.size(); ++k) {
    const Vec2& p = poly[k];
    const Vec2& q = poly[(k + 1) % poly.size()];
    a += p.x * q.z - q.x * p.z;
  }
  return 0.5 * a;
}

inline bool point_in_polygon(const std::vector<Vec2>& poly, double x, double z) {
  bool inside = false;
  size_t n = poly.size();
  for (size_t k = 0, m = n - 1; k < n; m = k++) {
    if ((poly[k].z > z) != (poly[m].z > z)) {
      double xc = poly[m].x + (z - poly[m].z) / (poly[k].z - poly[m].z) *
                                  (poly[k].x - poly[m].x);
      if (x < xc) inside = !inside;
    }
  }
  return inside;
}

inline double polygon_diameter(const std::vector<Vec2>& poly) {
  double best = 0.0;
  for (size_t a = 0; a < poly.size(); ++a)
    for (size_t b = a + 1; b < poly.size(); ++b)
      best = std::max(best, std::hypot(poly[a].x - poly[b].x, poly[a].z - poly[b].z));
  return best;
}

inline bool polygon_is_simple(const std::vector<Vec2>& poly) {
  size_t n = poly.size();
  for (size_t a = 0; a < n; ++a) {
    for (size_t b = a + 1; b < n; ++b) {
      if (b == a || (b + 1) % n == a || (a + 1) % n == b) continue;
      if (detail::segments_intersect(poly[a], poly[(a + 1) % n], poly[b],
                                     poly[(b + 1) % n]))
        return false;
    }
  }
  return true;
}

inline bool polygon_is_rectilinear(const std::vector<Vec2>& poly, double tol = 1e-9) {
  size_t n = poly.size();
  if (n < 4 || n % 2 != 0) return false;
  bool prev_x_const = false;
  for (size_t k = 0; k < n; ++k) {
    const Vec2& p = poly[k];
    const Vec2& q = poly[(k + 1) % n];
    double dx = std::abs(q.x - p.x), dz = std::abs(q.z - p.z);
    bool x_const = dx <= tol && dz > tol;
    bool z_const = dz <= tol && dx > tol;
    if (!x_const && !z_const) return false;
    if (k > 0 && x_const == prev_x_const) return false;
    prev_x_const = x_const;
  }
  return true;
}

inline void validate_layout(const ManhattanLayout& layout) {
  if (!polygon_is_rectilinear(layout.floor))
    throw GeometryError("floor polygon is not rectilinear with alternating edges");
  if (!polygon_is_simple(layout.floor))
    throw GeometryError("floor polygon is not simple");
  if (!point_in_polygon(layout.floor, 0.0, 0.0))
    throw GeometryError("camera is not strictly inside the floor polygon");
  if (!(layout.h_cam > 0.0)) throw GeometryError("h_cam must be positive");
  if (!(layout.h_ceil > layout.h_cam))
    throw GeometryError("h_ceil must exceed h_cam");
}

// First intersection of the horizontal ray from the origin along longitude u
// with the polygon boundary. Returns the distance; edge index out-param.
inline double raycast_wall(const std::vector<Vec2>& poly, double u,
                           int* edge_index = nullptr, double* hit_along = nullptr) {
  Vec2 dir{std::sin(u), std::cos(u)};
  double best = std::numeric_limits<double>::infinity();
  size_t n = poly.size();
  for (size_t k = 0; k < n; ++k) {
    const Vec2& p = poly[k];
    const Vec2& q = poly[(k + 1) % n];
    Vec2 e{q.x - p.x, q.z - p.z};
    double den = detail::cross(dir, e);
    if (std::abs(den) <= detail::kEps) continue;  // parallel edge
    double t = detail::cross(Vec2{p.x, p.z}, e) / den;
    double s = detail::cross(Vec2{p.x, p.z}, dir) / den;
    if (t <= detail::kEps) continue;
    if (s < -1e-9 || s > 1.0 + 1e-9) continue;
    if (t < best) {
      best = t;
      if (edge_index) *edge_index = int(k);
      if (hit_along) *hit_along = s;
    }
  }
  if (!std::isfinite(best))
    throw GeometryError("ray from camera does not hit the polygon boundary");
  return best;
}

// Reconstructs a Manhattan layout from a corner annotation by dropping each
// corner to the floor plane and snapping the result to a rectilinear polygon.
inline ManhattanLayout corners_to_layout(const CornerAnnotation& ann,
                                         double h_cam) {
  validate_annotation(ann);
  if (h_cam <= 0.0) throw GeometryError("h_cam must be positive");

  size_t n = ann.corners.size();
  std::vector<Vec2> pts(n);
  std::vector<double> dist(n);
  double h_up_sum = 0.0;
  for (size_t k = 0; k < n; ++k) {
    const Corner& c = ann.corners[k];
    if (c.vf <= 0.0) throw GeometryError("floor latitude must be positive");
    double d = h_cam / std::tan(c.vf);
    dist[k] = d;
    pts[k] = {d * std::sin(c.u), d * std::cos(c.u)};
    h_up_sum += d * std::tan(-c.vc);
  }

  // Snap: edges alternate constant-x / constant-z; two possible parities.
  auto snap = [&](int parity, double* residual) {
    std::vector<double> edge_coord(n);
    for (size_t k = 0; k < n; ++k) {
      const Vec2& p = pts[k];
      const Vec2& q = pts[(k + 1) % n];
      bool x_const = (int(k) % 2) == parity;
      edge_coord[k] = x_const ? 0.5 * (p.x + q.x) : 0.5 * (p.z + q.z);
    }
    std::vector<Vec2> out(n);
    double res = 0.0;
    for (size_t k = 0; k < n; ++k) {
      size_t prev = (k + n - 1) % n;
      bool k_x_const = (int(k) % 2) == parity;
      double x = k_x_const ? edge_coord[k] : edge_coord[prev];
      double z = k_x_const ? edge_coord[prev] : edge_coord[k];
      out[k] = {x, z};
      res += (x - pts[k].x) * (x - pts[k].x) + (z - pts[k].z) * (z - pts[k].z);
    }
    *residual = std::sqrt(res / n);
    return out;
  };

  double r0, r1;
  std::vector<Vec2> s0 = snap(0, &r0);
  std::vector<Vec2> s1 = snap(1, &r1);
  std::vector<Vec2> snapped = r0 <= r1 ? s0 : s1;
  double residual = std::min(r0, r1);

  double mean_dist = 0.0;
  for (double d : dist) mean_dist += d / n;
  if (residual > 0.3 * mean_dist)
    throw GeometryError("corners do not alternate along Manhattan axes");

  ManhattanLayout layout;
  layout.floor = snapped;
  layout.h_cam = h_cam;
  layout.h_ceil = h_cam + h_up_sum / n;
  if (polygon_area(layout.floor) < 0)
    std::reverse(layout.floor.begin(), layout.floor.end());
  validate_layout(layout);
  return layout;
}

// Renders the boundary channels (y_c, y_f) of a layout by per-column ray
// casting; y_w is left zero (see corners_to_wall_channel).
inline BoundaryTarget layout_to_boundary(const ManhattanLayout& layout, int w) {
  validate_layout(layout);
  BoundaryTarget t(w);
  double h_up = layout.h_ceil - layout.h_cam;
  for (int j = 0; j < w; ++j) {
    double d = raycast_wall(layout.floor, col_to_longitude(j, w));
    t.yf[j] = std::atan(layout.h_cam / d);
    t.yc[j] = -std::atan(h_up / d);
  }
  return t;
}

inline std::vector<double> corners_to_wall_channel(const CornerAnnotation& ann,
                                                   int w) {
  validate_annotation(ann);
  std::vector<int> cols;
  cols.reserve(ann.corners.size());
  for (const Corner& c : ann.corners)
    cols.push_back(wrap_col(int(std::lround(longitude_to_col(c.u, w))), w));
  std::vector<double> yw(w);
  for (int j = 0; j < w; ++j) {
    int dmin = w;
    for (int c : cols) dmin = std::min(dmin, circular_col_distance(j, c, w));
    yw[j] = std::pow(kCornerScoreDecay, dmin);
  }
  return yw;
}

// Corner columns from the corner-score channel: circular local maxima above
// `thresh` with non-maximum suppression at radius `min_sep`.
inline std::vector<int> find_corner_columns(const std::vector<double>& yw,
                                            int min_sep, double thresh) {
  int w = int(yw.size());
  std::vector<int> cand;
  for (int j = 0; j < w; ++j) {
    double l = yw[(j + w - 1) % w], c = yw[j], r = yw[(j + 1) % w];
    if (c >= thresh && c >= l && c > r) cand.push_back(j);
  }
  std::sort(cand.begin(), cand.end(),
            [&](int a, int b) { return yw[a] > yw[b]; });
  std::vector<int> kept;
  for (int j : cand) {
    bool ok = true;
    for (int k : kept)
      if (circular_col_distance(j, k, w) < min_sep) { ok = false; break; }
    if (ok) kept.push_back(j);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline CornerAnnotation boundary_to_corners(const BoundaryTarget& t,
                                            int min_sep = -1,
                                            double thresh = 0.5) {
  int w = t.width();
  if (min_sep < 0) min_sep = std::max(1, w / 64);
  std::vector<int> cols = find_corner_columns(t.yw, min_sep, thresh);
  if (cols.size() < 4)
    throw DetectionError("fewer than 4 corner peaks above threshold");
  CornerAnnotation ann;
  for (int j : cols)
    ann.corners.push_back({col_to_longitude(j, w), t.yc[j], t.yf[j]});
  return ann;
}

// Surface hit by a panoramic ray: wall edge index, or floor/ceiling.
struct RayHit {
  double depth = 0.0;     // Euclidean distance, meters
  int surface = 0;        // >= 0: wall edge index; -1: floor; -2: ceiling
  double wall_s = 0.0;    // position along the wall edge, [0,1]
  Vec2 ground;            // horizontal hit coordinates
};

inline RayHit trace_ray(const ManhattanLayout& layout, double u, double v) {
  int edge = 0;
  double s = 0.0;
  double d_wall = raycast_wall(layout.floor, u, &edge, &s);
  double h_up = layout.h_ceil - layout.h_cam;
  RayHit hit;
  double cv = std::cos(v);
  if (v > 0.0) {
    double reach = layout.h_cam / std::tan(v);
    if (reach <= d_wall) {
      hit.depth = layout.h_cam / std::sin(v);
      hit.surface = -1;
      hit.ground = {reach * std::sin(u), reach * std::cos(u)};
      return hit;
    }
  } else if (v < 0.0) {
    double reach = h_up / std::tan(-v);
    if (reach <= d_wall) {
      hit.depth = h_up / std::sin(-v);
      hit.surface = -2;
      hit.ground = {reach * std::sin(u), reach * std::cos(u)};
      return hit;
    }
  }
  hit.depth = d_wall / cv;
  hit.surface = edge;
  hit.wall_s = s;
  hit.ground = {d_wall * std::sin(u), d_wall * std::cos(u)};
  return hit;
}

inline std::vector<double> layout_to_depth(const ManhattanLayout& layout, int h,
                                           int w) {
  validate_layout(layout);
  std::vector<double> depth(size_t(h) * w);
  for (int i = 0; i < h; ++i) {
    double v = row_to_latitude(i, h);
    for (int j = 0; j < w; ++j)
      depth[size_t(i) * w + j] = trace_ray(layout, col_to_longitude(j, w), v).depth;
  }
  return depth;
}

enum class SurfaceClass : uint8_t { Ceiling = 0, Wall = 1, Floor = 2 };

inline std::vector<uint8_t> boundary_to_segmentation(const BoundaryTarget& t,
                                                     int h, int w) {
  std::vector<uint8_t> seg(size_t(h) * w);
  for (int i = 0; i < h; ++i) {
    double v = row_to_latitude(i, h);
    for (int j = 0; j < w; ++j) {
      uint8_t c = uint8_t(SurfaceClass::Wall);
      if (v < t.yc[j]) c = uint8_t(SurfaceClass::Ceiling);
      else if (v > t.yf[j]) c = uint8_t(SurfaceClass::Floor);
      seg[size_t(i) * w + j] = c;
    }
  }
  return seg;
}

}  // namespace layout360
