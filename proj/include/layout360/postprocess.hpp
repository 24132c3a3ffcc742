#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "layout360/core.hpp"
#include "layout360/geometry.hpp"

// Raw predicted boundary vectors -> Manhattan 3D layout.

namespace layout360 {

struct ReconstructConfig {
  double peak_threshold = 0.5;
  int min_peak_separation = -1;  // default W/64
  double h_cam = kCanonicalCameraHeight;
};

namespace detail {

inline double clamp_floor_lat(double v) {
  return std::clamp(v, 0.02, kPi / 2 - 0.02);
}

// Least-squares wall fit: every column between two consecutive corner peaks
// lies on the same axis-aligned wall, so the wall coordinate is estimated
// from all of them rather than from the two quantized peak columns alone.
// Returns the snapped polygon; residual (rms point-to-wall distance) out.
inline std::vector<Vec2> fit_walls(const BoundaryTarget& pred,
                                   const std::vector<int>& cols, double h_cam,
                                   double* residual) {
  int w = pred.width();
  size_t n = cols.size();

  auto floor_point = [&](int j) {
    double u = col_to_longitude(j, w);
    double d = h_cam / std::tan(clamp_floor_lat(pred.yf[j]));
    return Vec2{d * std::sin(u), d * std::cos(u)};
  };

  // Columns of each wall segment k: strictly between cols[k] and cols[k+1],
  // keeping one column of margin where the segment is wide enough.
  std::vector<std::vector<Vec2>> seg_pts(n);
  for (size_t k = 0; k < n; ++k) {
    int a = cols[k], b = cols[(k + 1) % n];
    int len = (b - a + w) % w;
    if (len == 0) len = w;
    int margin = len > 4 ? 1 : 0;
    for (int s = 1 + margin; s < len - margin; ++s)
      seg_pts[k].push_back(floor_point((a + s) % w));
    if (seg_pts[k].empty()) {
      seg_pts[k].push_back(floor_point(a));
      seg_pts[k].push_back(floor_point(b));
    }
  }

  // Two parities: even segments constant-x or constant-z.
  auto solve = [&](int parity, double* res) {
    std::vector<double> coord(n);
    double se = 0.0;
    size_t m = 0;
    for (size_t k = 0; k < n; ++k) {
      bool x_const = (int(k) % 2) == parity;
      double mean = 0.0;
      for (const Vec2& p : seg_pts[k]) mean += x_const ? p.x : p.z;
      mean /= double(seg_pts[k].size());
      coord[k] = mean;
      for (const Vec2& p : seg_pts[k]) {
        double d = (x_const ? p.x : p.z) - mean;
        se += d * d;
        ++m;
      }
    }
    *res = std::sqrt(se / double(m));
    // Vertex at corner k joins segment k-1 and segment k.
    std::vector<Vec2> poly(n);
    for (size_t k = 0; k < n; ++k) {
      size_t prev = (k + n - 1) % n;
      bool k_x_const = (int(k) % 2) == parity;
      double x = k_x_const ? coord[k] : coord[prev];
      double z = k_x_const ? coord[prev] : coord[k];
      poly[k] = {x, z};
    }
    return poly;
  };

  double r0, r1;
  std::vector<Vec2> p0 = solve(0, &r0);
  std::vector<Vec2> p1 = solve(1, &r1);
  *residual = std::min(r0, r1);
  return r0 <= r1 ? p0 : p1;
}

// Assembles a layout from detected corner columns; throws GeometryError when
// the walls do not form a plausible rectilinear polygon.
inline ManhattanLayout layout_from_columns(const BoundaryTarget& pred,
                                           const std::vector<int>& cols,
                                           double h_cam) {
  int w = pred.width();
  if (cols.size() < 4 || cols.size() % 2 != 0)
    throw GeometryError("corner peak count is not an even number >= 4");

  double residual = 0.0;
  ManhattanLayout layout;
  layout.floor = fit_walls(pred, cols, h_cam, &residual);
  layout.h_cam = h_cam;

  double mean_dist = 0.0;
  for (int j : cols)
    mean_dist += h_cam / std::tan(clamp_floor_lat(pred.yf[j])) / double(cols.size());
  if (residual > 0.3 * mean_dist)
    throw GeometryError("columns do not lie on axis-aligned walls");

  if (polygon_area(layout.floor) < 0)
    std::reverse(layout.floor.begin(), layout.floor.end());

  // Ceiling height: median of the per-column estimates d(u) * tan(-y_c),
  // robust to boundary outliers.
  layout.h_ceil = layout.h_cam + 1.0;  // placeholder for the ray cast below
  std::vector<double> h_up(w);
  for (int j = 0; j < w; ++j) {
    double d = raycast_wall(layout.floor, col_to_longitude(j, w));
    h_up[j] = d * std::tan(std::clamp(-pred.yc[j], 0.02, kPi / 2 - 0.02));
  }
  std::nth_element(h_up.begin(), h_up.begin() + w / 2, h_up.end());
  layout.h_ceil = h_cam + std::max(0.05, h_up[size_t(w / 2)]);
  validate_layout(layout);
  return layout;
}

// Last-resort corner set: one corner column per diagonal direction. For any
// boundary prediction this fits the best camera-containing rectangle.
inline std::vector<int> diagonal_fallback_columns(int w) {
  std::vector<int> cols;
  for (double u : {-3.0 * kPi / 4.0, -kPi / 4.0, kPi / 4.0, 3.0 * kPi / 4.0})
    cols.push_back(wrap_col(int(std::lround(longitude_to_col(u, w))), w));
  std::sort(cols.begin(), cols.end());
  return cols;
}

}  // namespace detail

// Boundary prediction -> corner peaks -> per-wall least-squares fit ->
// rectilinear polygon + robust ceiling height. Falls back to the 4 strongest
// corner-score maxima when thresholded peak detection fails, and to diagonal
// sampling (best-fit rectangle) as the last resort.
inline ManhattanLayout reconstruct(const BoundaryTarget& pred,
                                   const ReconstructConfig& cfg = {}) {
  int w = pred.width();
  int min_sep = cfg.min_peak_separation > 0 ? cfg.min_peak_separation
                                            : std::max(1, w / 64);

  std::vector<std::vector<int>> attempts;
  std::vector<int> cols = find_corner_columns(pred.yw, min_sep, cfg.peak_threshold);
  if (cols.size() % 2 != 0 && cols.size() > 4) {
    // Even corner count required; drop the weakest peak.
    auto weakest = std::min_element(
        cols.begin(), cols.end(),
        [&](int a, int b) { return pred.yw[a] < pred.yw[b]; });
    cols.erase(weakest);
  }
  if (cols.size() >= 4 && cols.size() % 2 == 0) attempts.push_back(cols);

  // Fallback: the 4 strongest maxima regardless of threshold, spread out.
  std::vector<int> loose = find_corner_columns(pred.yw, std::max(min_sep, w / 8), 0.0);
  if (loose.size() >= 4) {
    std::sort(loose.begin(), loose.end(),
              [&](int a, int b) { return pred.yw[a] > pred.yw[b]; });
    loose.resize(4);
    std::sort(loose.begin(), loose.end());
    attempts.push_back(loose);
  }
  attempts.push_back(detail::diagonal_fallback_columns(w));

  std::string last_error = "no corner candidates";
  for (const std::vector<int>& attempt : attempts) {
    try {
      return detail::layout_from_columns(pred, attempt, cfg.h_cam);
    } catch (const GeometryError& e) {
      last_error = e.what();
    }
  }
  throw GeometryError("layout reconstruction failed: " + last_error);
}

}  // namespace layout360
