#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "layout360/geometry.hpp"
#include "layout360/metrics.hpp"

using namespace layout360;

namespace {

ManhattanLayout box(double x0, double x1, double z0, double z1, double h_cam,
                    double h_ceil) {
  ManhattanLayout l;
  l.floor = {{x0, z0}, {x1, z0}, {x1, z1}, {x0, z1}};
  l.h_cam = h_cam;
  l.h_ceil = h_ceil;
  return l;
}

}  // namespace

TEST(Iou, IdenticalLayoutsScoreHundred) {
  ManhattanLayout a = box(-1, 1, -1, 1, 1.6, 2.8);
  EXPECT_NEAR(iou2d(a, a), 100.0, 1e-9);
  EXPECT_NEAR(iou3d(a, a), 100.0, 1e-9);
}

TEST(Iou, DisjointFootprintsScoreZero) {
  ManhattanLayout a = box(0, 1, 0, 1, 1.6, 2.8);
  ManhattanLayout b = box(5, 6, 5, 6, 1.6, 2.8);
  EXPECT_NEAR(iou2d(a, b), 0.0, 1e-12);
  EXPECT_NEAR(iou3d(a, b), 0.0, 1e-12);
}

TEST(Iou, HalfOverlapSquares) {
  // [-1,1]^2 vs [0,2]x[-1,1]: intersection 2, union 4 + 4 - 2 = 6.
  ManhattanLayout a = box(-1, 1, -1, 1, 1.6, 2.8);
  ManhattanLayout b = box(0, 2, -1, 1, 1.6, 2.8);
  EXPECT_NEAR(iou2d(a, b), 100.0 * 2.0 / 6.0, 1e-9);
  // Same camera height and ceiling: full vertical overlap, so 3D matches 2D.
  EXPECT_NEAR(iou3d(a, b), 100.0 * 2.0 / 6.0, 1e-9);
}

TEST(Iou, NestedQuarter) {
  ManhattanLayout outer = box(0, 2, 0, 2, 1.6, 2.8);
  ManhattanLayout inner = box(0, 1, 0, 1, 1.6, 2.8);
  EXPECT_NEAR(iou2d(outer, inner), 25.0, 1e-9);
}

TEST(Iou, VerticalExtentMatters) {
  // Same unit footprint; ceilings 3.2 vs 2.4 with a shared camera height of
  // 1.6: overlap [-1.6, 0.8] = 2.4, union volume 3.2 -> 75%.
  ManhattanLayout a = box(0, 1, 0, 1, 1.6, 3.2);
  ManhattanLayout b = box(0, 1, 0, 1, 1.6, 2.4);
  EXPECT_NEAR(iou3d(a, b), 75.0, 1e-9);
  EXPECT_NEAR(iou2d(a, b), 100.0, 1e-9);
}

TEST(Iou, SymmetricInArguments) {
  ManhattanLayout a = box(-1, 1.5, -0.5, 1, 1.6, 2.8);
  ManhattanLayout b = box(0, 2, 0, 2, 1.4, 2.6);
  EXPECT_DOUBLE_EQ(iou2d(a, b), iou2d(b, a));
  EXPECT_DOUBLE_EQ(iou3d(a, b), iou3d(b, a));
}

TEST(Iou, QuarterTurnInvariantWhenBothRotate) {
  ManhattanLayout a = box(-1, 2, -0.5, 1, 1.6, 2.8);
  ManhattanLayout b = box(0, 1.5, -1, 2, 1.6, 2.6);
  auto rot = [](const ManhattanLayout& l) {
    ManhattanLayout r = l;
    for (Vec2& p : r.floor) p = {p.z, -p.x};
    return r;
  };
  EXPECT_NEAR(iou3d(rot(a), rot(b)), iou3d(a, b), 1e-9);
}

TEST(Iou, NonConvexExactOverlap) {
  // L-shaped room vs its bounding box: IoU is the area ratio.
  ManhattanLayout l;
  l.floor = {{-2, -2}, {2, -2}, {2, 1}, {1, 1}, {1, 2}, {-2, 2}};
  l.h_cam = 1.6;
  l.h_ceil = 2.8;
  ManhattanLayout bb = box(-2, 2, -2, 2, 1.6, 2.8);
  // Areas: 16 - 1 = 15 vs 16; intersection 15, union 16.
  EXPECT_NEAR(iou2d(l, bb), 100.0 * 15.0 / 16.0, 1e-9);
}

TEST(Iou, DegenerateThrows) {
  ManhattanLayout a = box(0, 1, 0, 1, 1.6, 2.8);
  ManhattanLayout bad = a;
  bad.floor = {{0, 0}, {0, 0}, {0, 0}, {0, 0}};
  EXPECT_THROW(iou2d(bad, a), GeometryError);
}

TEST(Iou, RasterizedCrossCheck) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> d(0.5, 3.0);
  for (int trial = 0; trial < 5; ++trial) {
    ManhattanLayout a = box(-d(rng), d(rng), -d(rng), d(rng), 1.6, 2.8);
    ManhattanLayout b = box(-d(rng), d(rng), -d(rng), d(rng), 1.6, 2.8);
    double exact = iou2d(a, b);
    // Rasterize both footprints on a fine grid over the joint bounding box.
    const int n = 700;
    double lo = -3.2, hi = 3.2, step = (hi - lo) / n;
    long inter = 0, uni = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double x = lo + (i + 0.5) * step, z = lo + (j + 0.5) * step;
        bool ia = point_in_polygon(a.floor, x, z);
        bool ib = point_in_polygon(b.floor, x, z);
        inter += ia && ib;
        uni += ia || ib;
      }
    double raster = 100.0 * double(inter) / double(uni);
    EXPECT_NEAR(exact, raster, 1.5);
  }
}

TEST(CornerError, HandComputedOffset) {
  int h = 512, w = 1024;
  double diag = std::sqrt(double(h) * h + double(w) * w);  // ~1144.87
  std::vector<std::pair<double, double>> gt, pred;
  for (int k = 0; k < 8; ++k) {
    gt.push_back({100.0 * k, 50.0 + 10.0 * k});
    pred.push_back(gt.back());
  }
  pred[3].first += 3.0;  // one corner off by a 3-4-5 pixel triangle
  pred[3].second += 4.0;
  double expected = 100.0 * (5.0 / 8.0) / diag;
  EXPECT_NEAR(corner_error(pred, gt, h, w), expected, 1e-9);
  EXPECT_NEAR(expected, 0.0546, 5e-4);
}

TEST(CornerError, MissingCornerPaysDiagonal) {
  int h = 512, w = 1024;
  std::vector<std::pair<double, double>> gt, pred;
  for (int k = 0; k < 8; ++k) gt.push_back({120.0 * k, 40.0 + 30.0 * k});
  pred = gt;
  pred.pop_back();  // 7 predictions vs 8 ground-truth corners
  // One unmatched corner at full-diagonal cost, averaged over N = 8.
  EXPECT_NEAR(corner_error(pred, gt, h, w), 100.0 / 8.0, 1e-9);
}

TEST(CornerError, FindsMinimumCostMatching) {
  int h = 64, w = 128;
  // Permuted but identical point sets must score exactly zero.
  std::vector<std::pair<double, double>> gt = {{10, 10}, {40, 20}, {90, 50}, {120, 5}};
  std::vector<std::pair<double, double>> pred = {gt[2], gt[0], gt[3], gt[1]};
  EXPECT_NEAR(corner_error(pred, gt, h, w), 0.0, 1e-12);
}

TEST(CornerError, AnnotationOverloadUsesBothBoundaries) {
  int h = 64, w = 128;
  CornerAnnotation ann;
  ann.corners = {{-2.0, -0.5, 0.6}, {-0.5, -0.4, 0.5}, {1.0, -0.5, 0.6}, {2.5, -0.4, 0.5}};
  EXPECT_NEAR(corner_error(ann, ann, h, w), 0.0, 1e-12);
  CornerAnnotation shifted = ann;
  shifted.corners[0].vf += 0.01;  // move one floor corner down slightly
  EXPECT_GT(corner_error(shifted, ann, h, w), 0.0);
}

TEST(PixelError, OneRowBoundaryShift) {
  int h = 64, w = 128;
  BoundaryTarget gt(w), pred(w);
  double row_step = kPi / h;
  for (int j = 0; j < w; ++j) {
    gt.yc[j] = pred.yc[j] = -0.7;
    gt.yf[j] = 0.7;
    pred.yf[j] = 0.7 + row_step;  // floor boundary one row lower everywhere
    gt.yw[j] = pred.yw[j] = 0.5;
  }
  // Exactly one row of pixels changes class: 100 * w / (h * w) = 100 / 64.
  EXPECT_NEAR(pixel_error(pred, gt, h, w), 100.0 / 64.0, 1e-9);
}

TEST(PixelError, IdenticalIsZero) {
  int h = 32, w = 64;
  BoundaryTarget t(w);
  for (int j = 0; j < w; ++j) {
    t.yc[j] = -0.6;
    t.yf[j] = 0.5;
  }
  EXPECT_DOUBLE_EQ(pixel_error(t, t, h, w), 0.0);
}

TEST(Depth, IdenticalLayouts) {
  ManhattanLayout a = box(-1, 1, -1, 1, 1.6, 2.8);
  DepthMetrics m = depth_metrics(a, a, 32, 64);
  EXPECT_DOUBLE_EQ(m.rmse, 0.0);
  EXPECT_DOUBLE_EQ(m.delta1, 1.0);
}

TEST(Depth, Delta1ThresholdIsInclusive) {
  // Uniformly scaling a layout scales every depth by the same factor.
  ManhattanLayout a = box(-1, 1, -1, 1, 1.6, 2.8);
  ManhattanLayout b = a;
  for (Vec2& p : b.floor) { p.x *= 1.25; p.z *= 1.25; }
  b.h_cam *= 1.25;
  b.h_ceil *= 1.25;
  DepthMetrics m = depth_metrics(b, a, 32, 64);
  EXPECT_DOUBLE_EQ(m.delta1, 1.0);  // ratio exactly 1.25 still counts

  ManhattanLayout c = a;
  for (Vec2& p : c.floor) { p.x *= 1.26; p.z *= 1.26; }
  c.h_cam *= 1.26;
  c.h_ceil *= 1.26;
  m = depth_metrics(c, a, 32, 64);
  EXPECT_DOUBLE_EQ(m.delta1, 0.0);
  EXPECT_GT(m.rmse, 0.0);
}

TEST(Depth, DoubledLayoutFailsDelta1) {
  ManhattanLayout a = box(-1, 1, -1, 1, 1.6, 2.8);
  ManhattanLayout b = a;
  for (Vec2& p : b.floor) { p.x *= 2; p.z *= 2; }
  b.h_cam *= 2;
  b.h_ceil *= 2;
  DepthMetrics m = depth_metrics(b, a, 32, 64);
  EXPECT_DOUBLE_EQ(m.delta1, 0.0);
}

TEST(Normalize, CameraHeightRescalesEverything) {
  ManhattanLayout a = box(-2, 2, -2, 2, 3.2, 5.6);
  ManhattanLayout n = normalize_camera_height(a);
  EXPECT_DOUBLE_EQ(n.h_cam, 1.6);
  EXPECT_DOUBLE_EQ(n.h_ceil, 2.8);
  EXPECT_DOUBLE_EQ(n.floor[0].x, -1.0);
  // Normalization never changes angle-space quantities: boundary unchanged.
  BoundaryTarget before = layout_to_boundary(a, 64);
  BoundaryTarget after = layout_to_boundary(n, 64);
  for (int j = 0; j < 64; ++j) {
    EXPECT_NEAR(before.yf[j], after.yf[j], 1e-12);
    EXPECT_NEAR(before.yc[j], after.yc[j], 1e-12);
  }
}

TEST(Aggregate, MeanAndSampleStddev) {
  std::vector<MetricValues> vals(3);
  vals[0].iou3d = 80;
  vals[1].iou3d = 90;
  vals[2].iou3d = 100;
  vals[0].corner_error = 1;
  vals[1].corner_error = 1;
  vals[2].corner_error = 1;
  MetricStats st = aggregate_metrics(vals);
  EXPECT_EQ(st.count, 3);
  EXPECT_DOUBLE_EQ(st.mean.iou3d, 90.0);
  EXPECT_NEAR(st.stddev.iou3d, 10.0, 1e-12);  // n-1 denominator
  EXPECT_DOUBLE_EQ(st.stddev.corner_error, 0.0);
}

TEST(Aggregate, CornerBuckets) {
  EXPECT_EQ(corner_bucket(4), "4");
  EXPECT_EQ(corner_bucket(6), "6");
  EXPECT_EQ(corner_bucket(8), "8");
  EXPECT_EQ(corner_bucket(10), "10+");
  EXPECT_EQ(corner_bucket(12), "10+");
}
