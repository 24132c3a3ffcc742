// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Self-contained: generates its own corpora under a temp directory.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "layout360/experiment.hpp"

using namespace layout360;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %d [%s] %s — %s\n", idx, pass ? "PASS" : "FAIL", name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

void criterion_gradients() {
  double start = now_seconds();
  PredictorConfig cfg;
  cfg.in_h = 8;
  cfg.in_w = 16;
  cfg.trunk_channels = {4, 6};
  cfg.mix_channels = 8;
  cfg.mix_kernel = 3;
  cfg.dropout_p = 0.5;
  Predictor net(cfg);
  std::mt19937_64 rng(2718);
  ParamVector theta = net.init_params(rng);

  Panorama x(cfg.in_h, cfg.in_w);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& v : x.data) v = unit(rng);

  BoundaryTarget sup_target(cfg.in_w);
  for (int j = 0; j < cfg.in_w; ++j) {
    sup_target.yc[j] = -0.2 - 0.5 * unit(rng);
    sup_target.yf[j] = 0.2 + 0.5 * unit(rng);
    sup_target.yw[j] = unit(rng);
  }
  // The consistency loss has the same functional form with a constant
  // prediction on the teacher side; use an actual second-network output.
  ParamVector theta2 = net.init_params(rng);
  BoundaryTarget cons_target = net.forward(theta2, x, false, 0);

  const uint64_t drop_seed = 99;
  auto loss_of = [&](const ParamVector& p, const BoundaryTarget& tgt) {
    PredictorOutput out = net.forward(p, x, true, drop_seed);
    return supervised_loss({out}, {tgt});
  };

  int checked = 0, failed = 0;
  double worst = 0.0;
  for (const BoundaryTarget* tgt : {&sup_target, &cons_target}) {
    Predictor::Trace trace;
    PredictorOutput out = net.forward(theta, x, true, drop_seed, &trace);
    ParamVector grad = net.zero_params();
    net.backward(theta, trace, out, supervised_loss_grad({out}, {*tgt})[0], grad);

    std::mt19937_64 pick(5);
    for (int k = 0; k < 20; ++k) {
      size_t i = pick() % theta.values.size();
      double h = 1e-5;
      ParamVector tp = theta, tm = theta;
      tp.values[i] += h;
      tm.values[i] -= h;
      double fd = (loss_of(tp, *tgt) - loss_of(tm, *tgt)) / (2 * h);
      double a = grad.values[i];
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
      worst = std::max(worst, rel);
      ++checked;
      if (rel >= 1e-4) ++failed;
    }
  }
  double elapsed = now_seconds() - start;
  report(1, "gradient correctness", failed == 0 && checked >= 30 && elapsed < 60,
         fmt("%d coordinates, worst relative error %.2e, %.1f s", checked,
             worst, elapsed));
}

// ---------------------------------------------------------------- criterion 2

void criterion_schedules() {
  bool ok = true;
  std::string why;
  if (std::abs(ramp_weight(0, 4500) - std::exp(-5.0)) > 1e-9) {
    ok = false;
    why += "lambda(0); ";
  }
  if (ramp_weight(4500, 4500) != 1.0) {
    ok = false;
    why += "lambda(T); ";
  }
  if (std::abs(lr_schedule(3e-4, 750, 1000) - 0.5 * 3e-4) > 1e-12) {
    ok = false;
    why += "lr(0.75 t_max); ";
  }
  {
    ParamVector t, s;
    t.add_segment("w", 1);
    s.add_segment("w", 1);
    t.values = {0.0};
    s.values = {1.0};
    ema_update(t, s, 0.999);
    if (std::abs(t.values[0] - 0.001) > 1e-12) {
      ok = false;
      why += "ema(0.999,0,1); ";
    }
  }
  // Worked iteration budget: 600 unlabeled scenes, batch 4, 100 epochs.
  int64_t steps = (600 + 4 - 1) / 4;
  int64_t t_max = 100 * steps;
  if (t_max != 15000) {
    ok = false;
    why += "t_max != 15000; ";
  }
  report(2, "schedule and EMA unit values", ok,
         ok ? "lambda(0)=e^-5, lambda(T)=1, lr(0.75 t_max)=lr0/2, "
              "ema(0.999,0,1)=0.001, t_max worked example = 15000"
            : why);
}

// ---------------------------------------------------------------- criterion 3

BoundaryTarget boundary_from_polygon(const std::vector<Vec2>& poly,
                                     double h_cam, double h_ceil, int w) {
  BoundaryTarget t(w);
  for (int j = 0; j < w; ++j) {
    double d = raycast_wall(poly, col_to_longitude(j, w));
    t.yf[j] = std::atan(h_cam / d);
    t.yc[j] = -std::atan((h_ceil - h_cam) / d);
  }
  return t;
}

// Circular Hausdorff distance between two column sets.
int column_set_distance(const std::vector<int>& a, const std::vector<int>& b,
                        int w) {
  auto directed = [&](const std::vector<int>& from, const std::vector<int>& to) {
    int worst = 0;
    for (int j : from) {
      int best = w;
      for (int k : to) best = std::min(best, circular_col_distance(j, k, w));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

void criterion_augmentation() {
  const int h = 64, w = 256;
  bool ok = true;
  std::string why;

  // Identities.
  {
    auto rng = derive_rng(1, 30, 0);
    SceneSample s = generate_scene(rng, 6, h, w);
    Panorama p = s.image;
    rotate_inplace(p, nullptr, 360.0);
    if (p.data != s.image.data) { ok = false; why += "rotate(360) not identity; "; }
    p = s.image;
    stretch_inplace(p, nullptr, 1.0, 1.0);
    double mae = 0;
    for (size_t k = 0; k < p.data.size(); ++k)
      mae += std::abs(p.data[k] - s.image.data[k]);
    if (mae / double(p.data.size()) > 1e-9) { ok = false; why += "stretch(1,1) not identity; "; }
    p = s.image;
    flip_inplace(p, nullptr);
    flip_inplace(p, nullptr);
    if (p.data != s.image.data) { ok = false; why += "flip not involution; "; }
  }

  // Stretch inverse round trip on a rendered scene.
  {
    auto rng = derive_rng(2, 30, 1);
    SceneSample s = generate_scene(rng, 4, h, w);
    Panorama p = s.image;
    stretch_inplace(p, nullptr, 1.4, 0.7);
    stretch_inplace(p, nullptr, 1.0 / 1.4, 1.0 / 0.7);
    double mae = 0;
    for (size_t k = 0; k < p.data.size(); ++k)
      mae += std::abs(p.data[k] - s.image.data[k]);
    mae /= double(p.data.size());
    if (mae >= 0.02) { ok = false; why += fmt("round-trip MAE %.4f; ", mae); }
  }

  // 200 scenes: augmented target == target re-rendered from the equivalently
  // transformed 3D layout, within one row / one column of quantization.
  int bad_scenes = 0;
  AugmentationConfig aug;
  for (int item = 0; item < 200; ++item) {
    auto rng = derive_rng(3, 30, uint64_t(item));
    SceneSample s = generate_scene(rng, 4 + 2 * (item % 5), h, w);
    GeometricDraw d = sample_geometric(rng, aug);

    BoundaryTarget t = scene_target(s.layout, s.annotation, w);
    Panorama img = s.image;
    apply_geometric(img, &t, d);

    // Equivalent scene transform: axis scaling, yaw by the quantized
    // rotation, then mirror when flipped.
    double delta = 2.0 * kPi * std::lround(d.rot_deg * w / 360.0) / w;
    std::vector<Vec2> poly = s.layout.floor;
    for (Vec2& p : poly) {
      p.x *= d.kx;
      p.z *= d.kz;
      double u = std::atan2(p.x, p.z) + delta;
      double dist = std::hypot(p.x, p.z);
      p = {dist * std::sin(u), dist * std::cos(u)};
      if (d.flip) p.x = -p.x;
    }
    BoundaryTarget fresh =
        boundary_from_polygon(poly, s.layout.h_cam, s.layout.h_ceil, w);

    double tol = kPi / h;  // one output row
    bool scene_ok = true;
    for (int j = 0; j < w; ++j)
      if (std::abs(t.yf[j] - fresh.yf[j]) > tol ||
          std::abs(t.yc[j] - fresh.yc[j]) > tol)
        scene_ok = false;

    // Corner channel: peak columns within one column of the transformed
    // corner longitudes.
    std::vector<int> expected;
    for (const Vec2& p : poly)
      expected.push_back(
          wrap_col(int(std::lround(longitude_to_col(std::atan2(p.x, p.z), w))), w));
    std::vector<int> detected = find_corner_columns(t.yw, 1, 0.9);
    if (column_set_distance(detected, expected, w) > 1) scene_ok = false;

    if (!scene_ok) ++bad_scenes;
  }
  if (bad_scenes > 0) {
    ok = false;
    why += fmt("%d/200 scenes outside quantization tolerance; ", bad_scenes);
  }
  report(3, "augmentation oracles", ok,
         ok ? "identities, involution, 200-scene transform equivalence, "
              "inverse round trip"
            : why);
}

// ---------------------------------------------------------------- criterion 4

void criterion_round_trip() {
  double start = now_seconds();
  const int h = 64, w = 256;
  int rooms = 1000;
  int corner_misses = 0;
  double iou_sum = 0.0, iou_min = 100.0;
  for (int item = 0; item < rooms; ++item) {
    auto rng = derive_rng(4, 30, uint64_t(item));
    SceneSample s = generate_scene(rng, 4 + 2 * (item % 5), h, w);
    BoundaryTarget t = scene_target(s.layout, s.annotation, w);

    // corners -> target -> corners within one column.
    CornerAnnotation rec = boundary_to_corners(t);
    std::vector<int> got, want;
    for (const Corner& c : rec.corners)
      got.push_back(wrap_col(int(std::lround(longitude_to_col(c.u, w))), w));
    for (const Corner& c : s.annotation.corners)
      want.push_back(wrap_col(int(std::lround(longitude_to_col(c.u, w))), w));
    if (got.size() != want.size() || column_set_distance(got, want, w) > 1)
      ++corner_misses;

    double v = iou3d(reconstruct(t), s.layout);
    iou_sum += v;
    iou_min = std::min(iou_min, v);
  }
  double mean = iou_sum / rooms;
  double elapsed = now_seconds() - start;
  bool ok = corner_misses == 0 && mean > 99.0 && elapsed < 300;
  report(4, "encoding round trip", ok,
         fmt("%d rooms, corner misses %d, mean iou3d %.3f (min %.2f), %.1f s",
             rooms, corner_misses, mean, iou_min, elapsed));
}

// ---------------------------------------------------------------- criterion 5

ManhattanLayout box(double x0, double x1, double z0, double z1, double h_cam,
                    double h_ceil) {
  ManhattanLayout l;
  l.floor = {{x0, z0}, {x1, z0}, {x1, z1}, {x0, z1}};
  l.h_cam = h_cam;
  l.h_ceil = h_ceil;
  return l;
}

void criterion_metrics() {
  bool ok = true;
  std::string why;
  auto expect = [&](bool cond, const char* what) {
    if (!cond) {
      ok = false;
      why += what;
      why += "; ";
    }
  };

  ManhattanLayout a = box(-1, 1, -1, 1, 1.6, 2.8);
  expect(std::abs(iou3d(a, a) - 100.0) < 1e-9, "identical iou3d != 100");
  expect(std::abs(iou2d(a, a) - 100.0) < 1e-9, "identical iou2d != 100");
  ManhattanLayout far_box = box(5, 6, 5, 6, 1.6, 2.8);
  expect(iou2d(a, far_box) < 1e-9, "disjoint iou2d != 0");
  ManhattanLayout b = box(0, 2, -1, 1, 1.6, 2.8);
  expect(std::abs(iou2d(a, b) - 100.0 * 2 / 6) < 1e-9, "half overlap 2/6");
  expect(std::abs(iou3d(a, b) - 100.0 * 2 / 6) < 1e-9, "half overlap 3d");
  expect(std::abs(iou2d(box(0, 2, 0, 2, 1.6, 2.8), box(0, 1, 0, 1, 1.6, 2.8)) -
                  25.0) < 1e-9,
         "nested quarter 25");
  expect(std::abs(iou3d(box(0, 1, 0, 1, 1.6, 3.2), box(0, 1, 0, 1, 1.6, 2.4)) -
                  75.0) < 1e-9,
         "vertical extent 75");
  expect(iou3d(a, b) == iou3d(b, a), "iou3d symmetry");

  {
    int hh = 512, ww = 1024;
    double diag = std::sqrt(double(hh) * hh + double(ww) * ww);
    std::vector<std::pair<double, double>> gt, pred;
    for (int k = 0; k < 8; ++k) {
      gt.push_back({100.0 * k, 50.0 + 10.0 * k});
      pred.push_back(gt.back());
    }
    pred[3].first += 3;
    pred[3].second += 4;
    expect(std::abs(corner_error(pred, gt, hh, ww) - 100.0 * (5.0 / 8.0) / diag) <
               1e-9,
           "corner hand value");
    pred = gt;
    pred.pop_back();
    expect(std::abs(corner_error(pred, gt, hh, ww) - 100.0 / 8.0) < 1e-9,
           "missing corner 12.5");
  }

  {
    int hh = 64, ww = 128;
    BoundaryTarget gt(ww), pred(ww);
    for (int j = 0; j < ww; ++j) {
      gt.yc[j] = pred.yc[j] = -0.7;
      gt.yf[j] = 0.7;
      pred.yf[j] = 0.7 + kPi / hh;
      gt.yw[j] = pred.yw[j] = 0.5;
    }
    expect(std::abs(pixel_error(pred, gt, hh, ww) - 100.0 / 64) < 1e-9,
           "pixel error 100/64");
  }

  {
    ManhattanLayout s125 = a, s2 = a;
    for (Vec2& p : s125.floor) { p.x *= 1.25; p.z *= 1.25; }
    s125.h_cam *= 1.25;
    s125.h_ceil *= 1.25;
    for (Vec2& p : s2.floor) { p.x *= 2; p.z *= 2; }
    s2.h_cam *= 2;
    s2.h_ceil *= 2;
    expect(depth_metrics(a, a, 32, 64).rmse == 0.0, "identical rmse 0");
    expect(depth_metrics(a, a, 32, 64).delta1 == 1.0, "identical delta1 1");
    expect(depth_metrics(s125, a, 32, 64).delta1 == 1.0, "1.25 inclusive");
    expect(depth_metrics(s2, a, 32, 64).delta1 == 0.0, "doubled delta1 0");
  }

  // Rasterized IoU cross-check.
  {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> d(0.5, 3.0);
    for (int trial = 0; trial < 3; ++trial) {
      ManhattanLayout p = box(-d(rng), d(rng), -d(rng), d(rng), 1.6, 2.8);
      ManhattanLayout q = box(-d(rng), d(rng), -d(rng), d(rng), 1.6, 2.8);
      const int n = 600;
      double lo = -3.2, step = 6.4 / n;
      long inter = 0, uni = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double x = lo + (i + 0.5) * step, z = lo + (j + 0.5) * step;
          bool ia = point_in_polygon(p.floor, x, z);
          bool ib = point_in_polygon(q.floor, x, z);
          inter += ia && ib;
          uni += ia || ib;
        }
      double raster = 100.0 * double(inter) / double(uni);
      expect(std::abs(iou2d(p, q) - raster) < 1.5, "raster cross-check");
    }
  }

  report(5, "metric oracles", ok, ok ? "all closed-form and raster checks" : why);
}

// ------------------------------------------------------- criteria 6, 7 and 8

TrainConfig desk_config() {
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.lr0 = 2e-3;
  cfg.alpha = 0.99;  // EMA horizon scaled to the desk iteration budget
  cfg.batch_labeled = 4;
  cfg.batch_unlabeled = 4;
  return cfg;
}

struct ModeAggregate {
  double iou_mean = 0, iou_std = 0, ce_mean = 0, ce_std = 0;
  int n = 0;
};

ModeAggregate aggregate_mode(const std::vector<RunResult>& results,
                             TrainMode mode) {
  std::vector<double> ious, ces;
  for (const RunResult& r : results)
    if (r.mode == mode) {
      ious.push_back(r.test.mean.iou3d);
      ces.push_back(r.test.mean.corner_error);
    }
  ModeAggregate m;
  m.n = int(ious.size());
  for (double v : ious) m.iou_mean += v / m.n;
  for (double v : ces) m.ce_mean += v / m.n;
  double si = 0, sc = 0;
  for (double v : ious) si += (v - m.iou_mean) * (v - m.iou_mean);
  for (double v : ces) sc += (v - m.ce_mean) * (v - m.ce_mean);
  m.iou_std = m.n > 1 ? std::sqrt(si / (m.n - 1)) : 0;
  m.ce_std = m.n > 1 ? std::sqrt(sc / (m.n - 1)) : 0;
  return m;
}

void criteria_training(const fs::path& tmp) {
  double start = now_seconds();

  DatasetManifest manifest =
      generate_corpus(tmp / "corpus", 550, 4, 12, 64, 256, 7, 50, 100);
  InMemoryCorpus corpus = load_corpus(tmp / "corpus", manifest);

  ExperimentSpec spec;
  spec.base = desk_config();
  spec.modes = {TrainMode::Supervised, TrainMode::MeanTeacher};
  spec.label_counts = {25};
  spec.seeds = {1, 2, 3, 4};
  std::vector<RunResult> results = run_experiment(manifest, corpus, spec);

  ModeAggregate mt = aggregate_mode(results, TrainMode::MeanTeacher);
  ModeAggregate sup = aggregate_mode(results, TrainMode::Supervised);
  double pooled_iou = std::sqrt(0.5 * (mt.iou_std * mt.iou_std +
                                       sup.iou_std * sup.iou_std));
  double pooled_ce = std::sqrt(0.5 * (mt.ce_std * mt.ce_std +
                                      sup.ce_std * sup.ce_std));
  double elapsed = now_seconds() - start;
  bool ok6 = mt.iou_mean - sup.iou_mean > pooled_iou &&
             sup.ce_mean - mt.ce_mean > pooled_ce && elapsed < 1800;
  report(6, "central claim at desk scale", ok6,
         fmt("3D IoU %.2f±%.2f (mt) vs %.2f±%.2f (sup), pooled std %.2f; "
             "corner error %.2f±%.2f (mt) vs %.2f±%.2f (sup), pooled std %.2f; "
             "%.0f s",
             mt.iou_mean, mt.iou_std, sup.iou_mean, sup.iou_std, pooled_iou,
             mt.ce_mean, mt.ce_std, sup.ce_mean, sup.ce_std, pooled_ce,
             elapsed));

  // Criterion 7a: lambda_max = 0 mean-teacher trajectory bit-equal to the
  // supervised trajectory under shared RNG (fast, tiny model).
  bool bit_equal = false;
  {
    PredictorConfig pc;
    pc.in_h = 16;
    pc.in_w = 32;
    pc.trunk_channels = {4, 6, 8};
    pc.mix_channels = 8;
    pc.mix_kernel = 3;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<LabeledExample> labeled;
    for (int k = 0; k < 4; ++k) {
      Panorama img(16, 32);
      for (double& v : img.data) v = unit(rng);
      BoundaryTarget t(32);
      for (int j = 0; j < 32; ++j) {
        t.yc[j] = -0.2 - 0.5 * unit(rng);
        t.yf[j] = 0.2 + 0.5 * unit(rng);
        t.yw[j] = unit(rng);
      }
      labeled.push_back({std::move(img), std::move(t)});
    }
    std::vector<Panorama> unlabeled;
    for (int k = 0; k < 8; ++k) {
      Panorama img(16, 32);
      for (double& v : img.data) v = unit(rng);
      unlabeled.push_back(std::move(img));
    }
    TrainConfig c;
    c.predictor = pc;
    c.epochs = 2;
    c.batch_labeled = 2;
    c.batch_unlabeled = 2;
    c.seed = 13;
    c.mode = TrainMode::MeanTeacher;
    c.lambda_max = 0.0;
    Checkpoint zero_mt = train(labeled, unlabeled, c);
    c.mode = TrainMode::Supervised;
    c.lambda_max = 1.0;
    Checkpoint plain = train(labeled, unlabeled, c);
    bit_equal = zero_mt.theta.values == plain.theta.values;
  }

  // Criterion 7b: the shared-weights consistency variant runs to completion;
  // its 3D IoU is reported next to the EMA teacher's (not hard-gated).
  double pi_iou = std::nan("");
  bool pi_done = false;
  try {
    RunResult pi = run_single(manifest, corpus, TrainMode::PiModel, 25, 1,
                              desk_config());
    pi_iou = pi.test.mean.iou3d;
    pi_done = std::isfinite(pi_iou);
  } catch (const std::exception&) {
    pi_done = false;
  }
  report(7, "equivalence gates", bit_equal && pi_done,
         fmt("lambda=0 trajectory bit-equal: %s; pi-model 3D IoU %.2f "
             "(mean-teacher %.2f, seed 1 vs 4-seed mean)",
             bit_equal ? "yes" : "NO", pi_iou, mt.iou_mean));

  // Criterion 8: protocol fidelity — 4-seed mean±std report rows and the
  // leakage guard on every unlabeled pool.
  bool ok8 = mt.n == 4 && sup.n == 4;
  fs::path report_path = tmp / "experiment.csv";
  save_experiment_report(report_path, results);
  ok8 = ok8 && fs::file_size(report_path) > 0;
  for (uint64_t seed : spec.seeds) {
    LabelSubset subset = subsample_labels(manifest, 25, seed);
    try {
      assert_no_test_leakage(manifest, subset.unlabeled_pool);
    } catch (const std::exception&) {
      ok8 = false;
    }
    // The guard must actually fire on a poisoned pool.
    auto poisoned = subset.unlabeled_pool;
    poisoned.push_back(manifest.splits.at("test").front());
    bool threw = false;
    try {
      assert_no_test_leakage(manifest, poisoned);
    } catch (const std::logic_error&) {
      threw = true;
    }
    ok8 = ok8 && threw;
  }
  report(8, "protocol fidelity", ok8,
         fmt("%d+%d seed runs aggregated, report at %s, leakage guard "
             "verified on 4 pools",
             mt.n, sup.n, report_path.string().c_str()));
}

}  // namespace

int main() {
  fs::path tmp = fs::temp_directory_path() / "layout360_acceptance";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  criterion_gradients();
  criterion_schedules();
  criterion_augmentation();
  criterion_round_trip();
  criterion_metrics();
  // Criteria 6-8 train real models (~20 min); skippable for quick iteration
  // on the property criteria.
  if (!std::getenv("LAYOUT360_ACCEPTANCE_FAST")) criteria_training(tmp);

  std::printf("%s (%d criterion failures, %.0f s total)\n",
              g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT",
              g_failures, now_seconds());
  return g_failures == 0 ? 0 : 1;
}
