#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "layout360/core.hpp"
#include "layout360/geometry.hpp"
#include "layout360/transforms.hpp"

// Synthetic Manhattan-scene generation and dataset split / label-subset
// management.

namespace layout360 {

class GenerationError : public std::runtime_error {
public:
  explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

struct SceneSample {
  Panorama image;
  CornerAnnotation annotation;
  ManhattanLayout layout;
};

namespace detail {

// Rectangle with up to four corner notches: exactly {4, 6, 8, 10, 12}
// corners, camera at the origin with margin.
inline std::vector<Vec2> sample_floor_polygon(std::mt19937_64& rng,
                                              int corner_count) {
  const double margin = 0.5;
  double a1 = uniform_in(rng, 1.2, 3.5);  // -x extent
  double a2 = uniform_in(rng, 1.2, 3.5);  // +x extent
  double b1 = uniform_in(rng, 1.2, 3.5);  // -z extent
  double b2 = uniform_in(rng, 1.2, 3.5);  // +z extent
  int notches = (corner_count - 4) / 2;

  std::vector<int> corners = {0, 1, 2, 3};  // SW, SE, NE, NW
  std::shuffle(corners.begin(), corners.end(), rng);
  std::set<int> cut(corners.begin(), corners.begin() + notches);

  auto notch_size = [&](double ext_x, double ext_z, double* wn, double* hn) {
    double wmax = std::min({ext_x - margin - 0.1, 0.4 * (a1 + a2)});
    double hmax = std::min({ext_z - margin - 0.1, 0.4 * (b1 + b2)});
    if (wmax < 0.3 || hmax < 0.3) return false;
    *wn = uniform_in(rng, 0.3, wmax);
    *hn = uniform_in(rng, 0.3, hmax);
    return true;
  };

  std::vector<Vec2> poly;
  double wn, hn;
  // SW
  if (cut.count(0)) {
    if (!notch_size(a1, b1, &wn, &hn)) return {};
    poly.push_back({-a1, -b1 + hn});
    poly.push_back({-a1 + wn, -b1 + hn});
    poly.push_back({-a1 + wn, -b1});
  } else {
    poly.push_back({-a1, -b1});
  }
  // SE
  if (cut.count(1)) {
    if (!notch_size(a2, b1, &wn, &hn)) return {};
    poly.push_back({a2 - wn, -b1});
    poly.push_back({a2 - wn, -b1 + hn});
    poly.push_back({a2, -b1 + hn});
  } else {
    poly.push_back({a2, -b1});
  }
  // NE
  if (cut.count(2)) {
    if (!notch_size(a2, b2, &wn, &hn)) return {};
    poly.push_back({a2, b2 - hn});
    poly.push_back({a2 - wn, b2 - hn});
    poly.push_back({a2 - wn, b2});
  } else {
    poly.push_back({a2, b2});
  }
  // NW
  if (cut.count(3)) {
    if (!notch_size(a1, b2, &wn, &hn)) return {};
    poly.push_back({-a1 + wn, b2});
    poly.push_back({-a1 + wn, b2 - hn});
    poly.push_back({-a1, b2 - hn});
  } else {
    poly.push_back({-a1, b2});
  }
  return poly;
}

// Every vertex must be directly visible from the camera, otherwise the
// per-column boundary is not a faithful encoding of the polygon.
inline bool star_shaped_from_origin(const std::vector<Vec2>& poly) {
  for (const Vec2& p : poly) {
    double u = std::atan2(p.x, p.z);
    double d = std::hypot(p.x, p.z);
    double hit = raycast_wall(poly, u);
    if (hit < d - 1e-9) return false;
  }
  return true;
}

// Corners must map to distinguishable image columns: peak detection merges
// corners closer than the suppression radius, so scenes keep a minimum
// angular separation between corner directions.
inline bool corners_angularly_separated(const std::vector<Vec2>& poly,
                                        double min_sep_rad = 0.16) {
  size_t n = poly.size();
  std::vector<double> us(n);
  for (size_t k = 0; k < n; ++k) us[k] = std::atan2(poly[k].x, poly[k].z);
  for (size_t a = 0; a < n; ++a)
    for (size_t b = a + 1; b < n; ++b) {
      double d = std::abs(wrap_longitude(us[a] - us[b]));
      if (d < min_sep_rad) return false;
    }
  return true;
}

}  // namespace detail

inline CornerAnnotation layout_to_annotation(const ManhattanLayout& l) {
  CornerAnnotation ann;
  ann.h_cam = l.h_cam;
  double h_up = l.h_ceil - l.h_cam;
  for (const Vec2& p : l.floor) {
    double d = std::hypot(p.x, p.z);
    ann.corners.push_back(
        {std::atan2(p.x, p.z), -std::atan(h_up / d), std::atan(l.h_cam / d)});
  }
  std::sort(ann.corners.begin(), ann.corners.end(),
            [](const Corner& a, const Corner& b) { return a.u < b.u; });
  return ann;
}

// Ground-truth regression target of a scene: rendered boundary channels plus
// the decay-encoded corner channel.
inline BoundaryTarget scene_target(const ManhattanLayout& layout,
                                   const CornerAnnotation& ann, int w) {
  BoundaryTarget t = layout_to_boundary(layout, w);
  t.yw = corners_to_wall_channel(ann, w);
  return t;
}

inline SceneSample generate_scene(std::mt19937_64& rng, int corner_count, int h,
                                  int w) {
  if (corner_count < 4 || corner_count > 12 || corner_count % 2 != 0)
    throw std::invalid_argument("corner count must be even, in [4, 12]");

  ManhattanLayout layout;
  layout.h_cam = kCanonicalCameraHeight;
  bool ok = false;
  for (int attempt = 0; attempt < 256 && !ok; ++attempt) {
    std::vector<Vec2> poly = detail::sample_floor_polygon(rng, corner_count);
    if (poly.empty()) continue;
    if (!detail::star_shaped_from_origin(poly)) continue;
    if (!detail::corners_angularly_separated(poly)) continue;
    layout.floor = std::move(poly);
    layout.h_ceil = uniform_in(rng, 2.4, 3.2);
    ok = true;
  }
  if (!ok) throw GenerationError("polygon sampling failed after bounded retries");
  validate_layout(layout);

  SceneSample s;
  s.layout = layout;
  s.annotation = layout_to_annotation(layout);

  // Render: per-wall base colors with vertical stripe texture, distinct
  // floor/ceiling shading, distance attenuation, and additive pixel noise.
  size_t n_walls = layout.floor.size();
  std::vector<std::array<double, 3>> wall_color(n_walls);
  std::vector<double> wall_phase(n_walls), wall_freq(n_walls);
  for (size_t k = 0; k < n_walls; ++k) {
    for (int c = 0; c < 3; ++c) wall_color[k][c] = uniform_in(rng, 0.30, 0.85);
    wall_phase[k] = uniform_in(rng, 0.0, 2.0 * kPi);
    wall_freq[k] = uniform_in(rng, 4.0, 9.0);
  }
  std::array<double, 3> floor_color, ceil_color;
  for (int c = 0; c < 3; ++c) {
    floor_color[c] = uniform_in(rng, 0.15, 0.40);
    ceil_color[c] = uniform_in(rng, 0.75, 0.95);
  }

  s.image = Panorama(h, w);
  const double noise_sigma = 0.02;
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (int i = 0; i < h; ++i) {
    double v = row_to_latitude(i, h);
    for (int j = 0; j < w; ++j) {
      double u = col_to_longitude(j, w);
      RayHit hit = trace_ray(layout, u, v);
      double shade = 1.0 / (1.0 + 0.12 * hit.depth);
      std::array<double, 3> base;
      if (hit.surface >= 0) {
        const Vec2& p = layout.floor[hit.surface];
        const Vec2& q = layout.floor[(hit.surface + 1) % n_walls];
        double along = hit.wall_s * std::hypot(q.x - p.x, q.z - p.z);
        double stripe =
            1.0 + 0.18 * std::sin(wall_freq[hit.surface] * along +
                                  wall_phase[hit.surface]);
        for (int c = 0; c < 3; ++c) base[c] = wall_color[hit.surface][c] * stripe;
      } else if (hit.surface == -1) {
        double checker = 1.0 + 0.10 * std::sin(3.0 * hit.ground.x) *
                                   std::sin(3.0 * hit.ground.z);
        for (int c = 0; c < 3; ++c) base[c] = floor_color[c] * checker;
      } else {
        for (int c = 0; c < 3; ++c) base[c] = ceil_color[c];
      }
      for (int c = 0; c < 3; ++c)
        s.image.at(c, i, j) = std::clamp(base[c] * shade + noise(rng), 0.0, 1.0);
    }
  }
  return s;
}

struct ManifestEntry {
  std::string id;
  std::string image_path;       // relative to the corpus root
  std::string annotation_path;  // relative to the corpus root
  int corner_count = 0;
};

struct DatasetManifest {
  std::string provenance = "synthetic";
  uint64_t generation_seed = 0;
  std::map<std::string, std::vector<ManifestEntry>> splits;  // train/val/test

  void validate() const {
    std::set<std::string> seen;
    for (const auto& [name, entries] : splits)
      for (const auto& e : entries)
        if (!seen.insert(e.id).second)
          throw std::invalid_argument("dataset splits are not disjoint: " + e.id);
  }
};

// Labeled subset + unlabeled pool per the sampling protocol: the labeled
// subset is a seeded permutation prefix of the training split (so smaller
// label counts nest inside larger ones), and the unlabeled pool is the union
// of train and val with labels stripped. Test instances never enter the pool.
struct LabelSubset {
  std::vector<ManifestEntry> labeled;
  std::vector<ManifestEntry> unlabeled_pool;
};

inline LabelSubset subsample_labels(const DatasetManifest& manifest, size_t n,
                                    uint64_t seed) {
  manifest.validate();
  auto it = manifest.splits.find("train");
  if (it == manifest.splits.end() || n > it->second.size())
    throw std::invalid_argument("label count exceeds the training split");
  std::vector<size_t> order(it->second.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = k;
  auto rng = derive_rng(seed, 20, 0);
  std::shuffle(order.begin(), order.end(), rng);

  LabelSubset out;
  for (size_t k = 0; k < n; ++k) out.labeled.push_back(it->second[order[k]]);
  out.unlabeled_pool = it->second;
  auto val = manifest.splits.find("val");
  if (val != manifest.splits.end())
    out.unlabeled_pool.insert(out.unlabeled_pool.end(), val->second.begin(),
                              val->second.end());
  return out;
}

// Leakage guard: no unlabeled-pool instance may be a test instance.
inline void assert_no_test_leakage(const DatasetManifest& manifest,
                                   const std::vector<ManifestEntry>& pool) {
  std::set<std::string> test_ids;
  auto it = manifest.splits.find("test");
  if (it != manifest.splits.end())
    for (const auto& e : it->second) test_ids.insert(e.id);
  for (const auto& e : pool)
    if (test_ids.count(e.id))
      throw std::logic_error("test instance leaked into unlabeled pool: " + e.id);
}

}  // namespace layout360
