#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

// Core data model: equirectangular panoramas, per-column boundary targets,
// corner annotations, and Manhattan 3D layouts.
//
// Conventions used throughout:
//   - column j <-> longitude u = 2*pi*(j + 0.5)/W - pi  (pixel centers)
//   - row i    <-> latitude  v = pi*(i + 0.5)/H - pi/2, increasing DOWNWARD,
//     so the floor side is positive and the ceiling side negative.
//   - floor-plan coordinates (x, z) with viewing direction
//     (x, y, z) = (cos v sin u, sin v, cos v cos u), y pointing down.

namespace layout360 {

inline constexpr double kPi = 3.14159265358979323846;

class GeometryError : public std::runtime_error {
public:
  explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

class DetectionError : public std::runtime_error {
public:
  explicit DetectionError(const std::string& what) : std::runtime_error(what) {}
};

struct Vec2 {
  double x = 0.0;
  double z = 0.0;
};

// Equirectangular RGB panorama, intensities in [0,1], stored channel-major.
struct Panorama {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // 3 * height * width

  Panorama() = default;
  Panorama(int h, int w) : height(h), width(w), data(3 * size_t(h) * w, 0.0) {
    // Full 360x180 coverage needs h >= 2 rows and an even number of columns;
    // the aspect ratio itself is free (the desk scale is 64x256).
    if (h < 2 || w < 4 || w % 2 != 0)
      throw std::invalid_argument("panorama must be at least 2x4 with even width");
  }

  double& at(int c, int i, int j) {
    return data[(size_t(c) * height + i) * width + j];
  }
  double at(int c, int i, int j) const {
    return data[(size_t(c) * height + i) * width + j];
  }
};

// Per-column regression target: ceiling-wall latitude y_c (negative),
// floor-wall latitude y_f (positive), and corner score y_w in [0,1].
struct BoundaryTarget {
  std::vector<double> yc;
  std::vector<double> yf;
  std::vector<double> yw;

  BoundaryTarget() = default;
  explicit BoundaryTarget(int w) : yc(w, 0.0), yf(w, 0.0), yw(w, 0.0) {}

  int width() const { return int(yc.size()); }
};

struct Corner {
  double u = 0.0;   // longitude in [-pi, pi)
  double vc = 0.0;  // ceiling latitude, < 0
  double vf = 0.0;  // floor latitude, > 0
};

// Ordered wall-wall corner list (counter-clockwise in the floor plan,
// longitudes strictly increasing up to one wrap-around).
struct CornerAnnotation {
  std::vector<Corner> corners;
  double h_cam = 1.6;
};

// Camera-centered rectilinear room: axis-aligned floor polygon in meters,
// floor at y = +h_cam (down-positive), ceiling at y = -(h_ceil - h_cam).
struct ManhattanLayout {
  std::vector<Vec2> floor;
  double h_cam = 1.6;
  double h_ceil = 0.0;
};

inline double col_to_longitude(int j, int w) {
  if (j < 0 || j >= w) throw std::out_of_range("column index out of range");
  return 2.0 * kPi * (j + 0.5) / w - kPi;
}

inline double row_to_latitude(int i, int h) {
  if (i < 0 || i >= h) throw std::out_of_range("row index out of range");
  return kPi * (i + 0.5) / h - kPi / 2.0;
}

// Fractional inverses of the pixel-center maps.
inline double longitude_to_col(double u, int w) {
  return (u + kPi) * w / (2.0 * kPi) - 0.5;
}

inline double latitude_to_row(double v, int h) {
  return (v + kPi / 2.0) * h / kPi - 0.5;
}

inline int wrap_col(int j, int w) {
  int r = j % w;
  return r < 0 ? r + w : r;
}

inline double wrap_longitude(double u) {
  u = std::fmod(u + kPi, 2.0 * kPi);
  if (u < 0) u += 2.0 * kPi;
  return u - kPi;
}

// Circular distance between two columns, in columns.
inline int circular_col_distance(int a, int b, int w) {
  int d = std::abs(a - b) % w;
  return std::min(d, w - d);
}

inline void validate_annotation(const CornerAnnotation& ann) {
  const auto& c = ann.corners;
  if (c.size() < 4 || c.size() % 2 != 0)
    throw GeometryError("annotation needs an even corner count >= 4");
  int wraps = 0;
  for (size_t k = 0; k < c.size(); ++k) {
    const Corner& a = c[k];
    if (!(a.vc < 0.0 && a.vf > 0.0))
      throw GeometryError("corner latitudes must satisfy vc < 0 < vf");
    const Corner& b = c[(k + 1) % c.size()];
    if (b.u <= a.u) ++wraps;
  }
  if (wraps > 1) throw GeometryError("corner longitudes must increase with one wrap");
  if (ann.h_cam <= 0.0) throw GeometryError("camera height must be positive");
}

}  // namespace layout360
