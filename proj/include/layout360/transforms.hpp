#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "layout360/core.hpp"
#include "layout360/geometry.hpp"

// Panorama augmentations and their exact co-transforms of BoundaryTarget:
// whole-column horizontal rotation, left-right flip, gamma correction, and
// panoramic stretch along the two horizontal scene axes.

namespace layout360 {

struct AugmentationConfig {
  double stretch_min = 0.5;
  double stretch_max = 1.5;
  double gamma_min = 0.5;
  double gamma_max = 2.0;
  double flip_prob = 0.5;
};

// Shared geometric sample for the student / teacher unlabeled branches.
struct GeometricDraw {
  double kx = 1.0;
  double kz = 1.0;
  double rot_deg = 360.0;
  bool flip = false;
};

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Deterministic per-item RNG: independent of worker count and batch order.
inline std::mt19937_64 derive_rng(uint64_t seed, uint64_t stream, uint64_t item) {
  uint64_t s = detail::splitmix64(seed ^ detail::splitmix64(stream));
  return std::mt19937_64(detail::splitmix64(s ^ detail::splitmix64(item)));
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline void rotate_inplace(Panorama& p, BoundaryTarget* t, double r_deg) {
  int w = p.width;
  int s = wrap_col(int(std::lround(r_deg * w / 360.0)), w);
  if (s == 0) return;
  auto shift = [&](std::vector<double>& v, int stride_rows) {
    std::vector<double> tmp(w);
    for (int row = 0; row < stride_rows; ++row) {
      double* base = v.data() + size_t(row) * w;
      for (int j = 0; j < w; ++j) tmp[j] = base[(j - s % w + w) % w];
      std::copy(tmp.begin(), tmp.end(), base);
    }
  };
  shift(p.data, 3 * p.height);
  if (t) {
    shift(t->yc, 1);
    shift(t->yf, 1);
    shift(t->yw, 1);
  }
}

inline void flip_inplace(Panorama& p, BoundaryTarget* t) {
  int w = p.width;
  for (int row = 0; row < 3 * p.height; ++row) {
    double* base = p.data.data() + size_t(row) * w;
    std::reverse(base, base + w);
  }
  if (t) {
    std::reverse(t->yc.begin(), t->yc.end());
    std::reverse(t->yf.begin(), t->yf.end());
    std::reverse(t->yw.begin(), t->yw.end());
  }
}

inline void gamma_inplace(Panorama& p, double g) {
  if (!(g > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (g == 1.0) return;
  for (double& v : p.data) v = std::pow(v, g);
}

namespace detail {

inline double bilinear_sample(const Panorama& p, int c, double row, double col) {
  int h = p.height, w = p.width;
  row = std::clamp(row, 0.0, double(h - 1));
  int i0 = int(std::floor(row));
  int i1 = std::min(i0 + 1, h - 1);
  double fi = row - i0;
  double colw = col - w * std::floor(col / w);
  int j0 = int(std::floor(colw)) % w;
  int j1 = (j0 + 1) % w;
  double fj = colw - std::floor(colw);
  return (1 - fi) * ((1 - fj) * p.at(c, i0, j0) + fj * p.at(c, i0, j1)) +
         fi * ((1 - fj) * p.at(c, i1, j0) + fj * p.at(c, i1, j1));
}

// Circular linear interpolation of a per-column channel at fractional column.
inline double circular_lerp(const std::vector<double>& v, double col) {
  int w = int(v.size());
  double colw = col - w * std::floor(col / w);
  int j0 = int(std::floor(colw)) % w;
  int j1 = (j0 + 1) % w;
  double f = colw - std::floor(colw);
  return (1 - f) * v[j0] + f * v[j1];
}

inline double stretch_u(double u, double kx, double kz) {
  return std::atan2(kx * std::sin(u), kz * std::cos(u));
}

inline double stretch_v(double v, double u, double kx, double kz) {
  double su = std::sin(u), cu = std::cos(u);
  double s = std::sqrt(kx * kx * su * su + kz * kz * cu * cu);
  return std::atan(std::tan(v) / s);
}

}  // namespace detail

// Panoramic stretch: scene coordinates (x, y, z) -> (kx*x, y, kz*z),
// image resampled through the induced direction map.
inline void stretch_inplace(Panorama& p, BoundaryTarget* t, double kx, double kz) {
  if (!(kx > 0.0) || !(kz > 0.0))
    throw std::invalid_argument("stretch factors must be positive");
  if (kx == 1.0 && kz == 1.0) return;
  int h = p.height, w = p.width;

  Panorama out(h, w);
  for (int i = 0; i < h; ++i) {
    double v_out = row_to_latitude(i, h);
    for (int j = 0; j < w; ++j) {
      double u_out = col_to_longitude(j, w);
      double u_src = detail::stretch_u(u_out, 1.0 / kx, 1.0 / kz);
      double v_src = detail::stretch_v(v_out, u_out, 1.0 / kx, 1.0 / kz);
      double row = latitude_to_row(v_src, h);
      double col = longitude_to_col(u_src, w);
      for (int c = 0; c < 3; ++c)
        out.at(c, i, j) = detail::bilinear_sample(p, c, row, col);
    }
  }
  p = std::move(out);

  if (t) {
    BoundaryTarget nt(w);
    for (int j = 0; j < w; ++j) {
      double u_out = col_to_longitude(j, w);
      double u_src = detail::stretch_u(u_out, 1.0 / kx, 1.0 / kz);
      double col = longitude_to_col(u_src, w);
      double yc = detail::circular_lerp(t->yc, col);
      double yf = detail::circular_lerp(t->yf, col);
      nt.yc[j] = detail::stretch_v(yc, u_src, kx, kz);
      nt.yf[j] = detail::stretch_v(yf, u_src, kx, kz);
    }
    // Corner columns move through the forward direction map; the score
    // channel is regenerated rather than interpolated.
    std::vector<int> cols = find_corner_columns(t->yw, std::max(1, w / 64), 0.5);
    std::vector<int> moved;
    for (int j : cols) {
      double u = col_to_longitude(j, w);
      double u_new = detail::stretch_u(u, kx, kz);
      moved.push_back(wrap_col(int(std::lround(longitude_to_col(u_new, w))), w));
    }
    if (!moved.empty()) {
      for (int j = 0; j < w; ++j) {
        int dmin = w;
        for (int c : moved) dmin = std::min(dmin, circular_col_distance(j, c, w));
        nt.yw[j] = std::pow(kCornerScoreDecay, dmin);
      }
    }
    *t = std::move(nt);
  }
}

inline GeometricDraw sample_geometric(std::mt19937_64& rng,
                                      const AugmentationConfig& cfg) {
  GeometricDraw d;
  d.kx = uniform_in(rng, cfg.stretch_min, cfg.stretch_max);
  d.kz = uniform_in(rng, cfg.stretch_min, cfg.stretch_max);
  d.rot_deg = 360.0 - 360.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  d.flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.flip_prob;
  return d;
}

inline double sample_gamma(std::mt19937_64& rng, const AugmentationConfig& cfg) {
  return uniform_in(rng, cfg.gamma_min, cfg.gamma_max);
}

inline void apply_geometric(Panorama& p, BoundaryTarget* t, const GeometricDraw& d) {
  stretch_inplace(p, t, d.kx, d.kz);
  rotate_inplace(p, t, d.rot_deg);
  if (d.flip) flip_inplace(p, t);
}

// Labeled branch: full augmentation (geometric + gamma).
inline void augment_labeled(Panorama& p, BoundaryTarget& t, std::mt19937_64& rng,
                            const AugmentationConfig& cfg) {
  apply_geometric(p, &t, sample_geometric(rng, cfg));
  gamma_inplace(p, sample_gamma(rng, cfg));
}

// Unlabeled branches: the student sees the geometric augmentation alone; the
// teacher sees the same geometric output further perturbed by gamma.
inline void augment_unlabeled(const Panorama& in, Panorama& student,
                              Panorama& teacher, std::mt19937_64& rng,
                              const AugmentationConfig& cfg) {
  student = in;
  apply_geometric(student, nullptr, sample_geometric(rng, cfg));
  teacher = student;
  gamma_inplace(teacher, sample_gamma(rng, cfg));
}

}  // namespace layout360
