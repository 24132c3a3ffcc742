#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "layout360/dataset.hpp"
#include "layout360/io.hpp"
#include "layout360/metrics.hpp"
#include "layout360/postprocess.hpp"
#include "layout360/ssl.hpp"

// Corpus generation on disk, checkpoint evaluation, and the experiment /
// ablation grids with per-seed rows and mean +/- std aggregates.

namespace layout360 {

inline void save_manifest(const std::filesystem::path& path,
                          const DatasetManifest& m) {
  nlohmann::json doc;
  doc["provenance"] = m.provenance;
  doc["generation_seed"] = m.generation_seed;
  doc["splits"] = nlohmann::json::object();
  for (const auto& [name, entries] : m.splits) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries)
      arr.push_back({{"id", e.id},
                     {"image", e.image_path},
                     {"annotation", e.annotation_path},
                     {"corner_count", e.corner_count}});
    doc["splits"][name] = arr;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in);
  DatasetManifest m;
  m.provenance = doc.at("provenance").get<std::string>();
  m.generation_seed = doc.at("generation_seed").get<uint64_t>();
  for (const auto& [name, arr] : doc.at("splits").items()) {
    std::vector<ManifestEntry> entries;
    for (const auto& e : arr)
      entries.push_back({e.at("id").get<std::string>(),
                         e.at("image").get<std::string>(),
                         e.at("annotation").get<std::string>(),
                         e.at("corner_count").get<int>()});
    m.splits[name] = std::move(entries);
  }
  m.validate();
  return m;
}

// Generates `rooms` scenes under `dir` (images/, annotations/, manifest.json),
// cycling corner counts through the even values in [min_corners, max_corners]
// for balanced complexity buckets, then assigns a seeded random split with
// `val_count` validation and `test_count` test instances.
inline DatasetManifest generate_corpus(const std::filesystem::path& dir,
                                       int rooms, int min_corners,
                                       int max_corners, int height, int width,
                                       uint64_t seed, int val_count,
                                       int test_count) {
  if (min_corners < 4 || max_corners > 12 || min_corners > max_corners ||
      min_corners % 2 != 0 || max_corners % 2 != 0)
    throw std::invalid_argument("corner range must be even values within [4, 12]");
  if (val_count + test_count >= rooms)
    throw std::invalid_argument("val + test must leave a non-empty training split");

  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "annotations");

  std::vector<int> counts;
  for (int c = min_corners; c <= max_corners; c += 2) counts.push_back(c);

  std::vector<ManifestEntry> all;
  for (int k = 0; k < rooms; ++k) {
    auto rng = derive_rng(seed, 30, uint64_t(k));
    SceneSample s = generate_scene(rng, counts[size_t(k) % counts.size()],
                                   height, width);
    char id[16];
    std::snprintf(id, sizeof(id), "%05d", k);
    ManifestEntry e;
    e.id = id;
    e.image_path = "images/" + std::string(id) + ".png";
    e.annotation_path = "annotations/" + std::string(id) + ".json";
    e.corner_count = int(s.annotation.corners.size());
    save_png(dir / e.image_path, s.image);
    save_annotation(dir / e.annotation_path, s.annotation);
    all.push_back(std::move(e));
  }

  std::vector<size_t> order(all.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = k;
  {
    auto rng = derive_rng(seed, 31, 0);
    std::shuffle(order.begin(), order.end(), rng);
  }
  DatasetManifest m;
  m.generation_seed = seed;
  for (size_t k = 0; k < order.size(); ++k) {
    const ManifestEntry& e = all[order[k]];
    if (k < size_t(test_count)) m.splits["test"].push_back(e);
    else if (k < size_t(test_count + val_count)) m.splits["val"].push_back(e);
    else m.splits["train"].push_back(e);
  }
  m.validate();
  save_manifest(dir / "manifest.json", m);
  return m;
}

struct LoadedExample {
  std::string id;
  Panorama image;
  CornerAnnotation annotation;
  ManhattanLayout layout;
  BoundaryTarget target;
  int corner_count = 0;
};

inline std::vector<LoadedExample> load_entries(
    const std::filesystem::path& root, const std::vector<ManifestEntry>& entries) {
  std::vector<LoadedExample> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    LoadedExample ex;
    ex.id = e.id;
    ex.image = load_png(root / e.image_path);
    ex.annotation = load_annotation(root / e.annotation_path);
    ex.layout = corners_to_layout(ex.annotation, ex.annotation.h_cam);
    ex.target = scene_target(ex.layout, ex.annotation, ex.image.width);
    ex.corner_count = int(ex.annotation.corners.size());
    out.push_back(std::move(ex));
  }
  return out;
}

// Metrics of one prediction against one ground-truth scene. Reconstruction
// failures score as a total miss rather than aborting an evaluation sweep.
inline MetricValues score_prediction(const BoundaryTarget& pred,
                                     const LoadedExample& gt) {
  int h = gt.image.height, w = gt.image.width;
  MetricValues v;
  v.pixel_error = pixel_error(pred, gt.target, h, w);
  ManhattanLayout gt_norm = normalize_camera_height(gt.layout);
  try {
    ReconstructConfig rc;
    ManhattanLayout lay = normalize_camera_height(reconstruct(pred, rc));
    v.iou3d = iou3d(lay, gt_norm);
    v.iou2d = iou2d(lay, gt_norm);
    v.corner_error = corner_error(layout_to_annotation(lay), gt.annotation, h, w);
    DepthMetrics d = depth_metrics(lay, gt_norm, h, w);
    v.rmse = d.rmse;
    v.delta1 = d.delta1;
  } catch (const GeometryError&) {
    v.iou3d = 0.0;
    v.iou2d = 0.0;
    v.corner_error = 100.0;
    v.rmse = polygon_diameter(gt_norm.floor);
    v.delta1 = 0.0;
  }
  return v;
}

inline MetricsReport evaluate_checkpoint(const Predictor& net,
                                         const Checkpoint& ckpt,
                                         const std::vector<LoadedExample>& test,
                                         std::vector<MetricValues>* per_instance = nullptr) {
  std::vector<MetricValues> all;
  std::map<std::string, std::vector<MetricValues>> buckets;
  for (const LoadedExample& ex : test) {
    MetricValues v = score_prediction(predict_eval(net, ckpt, ex.image), ex);
    all.push_back(v);
    buckets[corner_bucket(size_t(ex.corner_count))].push_back(v);
  }
  if (per_instance) *per_instance = all;
  MetricsReport rep;
  rep.overall = aggregate_metrics(all);
  for (const auto& [name, vals] : buckets)
    rep.by_corner_count[name] = aggregate_metrics(vals);
  return rep;
}

// Mean validation 3D IoU of the averaged student/teacher prediction; used as
// the model-selection score during training.
inline double validation_iou3d(const Predictor& net, const ParamVector& theta,
                               const ParamVector& teacher,
                               const std::vector<LoadedExample>& val,
                               const PredictorConfig& cfg) {
  Checkpoint tmp;
  tmp.predictor = cfg;
  tmp.theta = theta;
  tmp.teacher = teacher;
  double total = 0.0;
  for (const LoadedExample& ex : val)
    total += score_prediction(predict_eval(net, tmp, ex.image), ex).iou3d;
  return val.empty() ? 0.0 : total / double(val.size());
}

struct InMemoryCorpus {
  std::vector<LoadedExample> train, val, test;
};

inline InMemoryCorpus load_corpus(const std::filesystem::path& root,
                                  const DatasetManifest& m) {
  InMemoryCorpus c;
  auto grab = [&](const char* name) -> std::vector<LoadedExample> {
    auto it = m.splits.find(name);
    return it == m.splits.end() ? std::vector<LoadedExample>{}
                                : load_entries(root, it->second);
  };
  c.train = grab("train");
  c.val = grab("val");
  c.test = grab("test");
  return c;
}

struct RunResult {
  TrainMode mode = TrainMode::Supervised;
  size_t labels = 0;
  uint64_t seed = 0;
  double swept_value = std::nan("");  // set by ablations
  MetricStats test;                   // mean/std over test instances
  Checkpoint checkpoint;
};

// Trains one configuration against the corpus: labeled subset drawn from the
// training split with the run seed, unlabeled pool = train + val images
// (labels stripped), validation-selected checkpoint, test-set evaluation.
inline RunResult run_single(const DatasetManifest& manifest,
                            const InMemoryCorpus& corpus, TrainMode mode,
                            size_t labels, uint64_t seed, TrainConfig base,
                            std::vector<LogRow>* log = nullptr) {
  base.mode = mode;
  base.seed = seed;
  base.validate();

  LabelSubset subset = subsample_labels(manifest, labels, seed);
  assert_no_test_leakage(manifest, subset.unlabeled_pool);

  std::map<std::string, const LoadedExample*> by_id;
  for (const LoadedExample& e : corpus.train) by_id[e.id] = &e;
  for (const LoadedExample& e : corpus.val) by_id[e.id] = &e;

  std::vector<LabeledExample> labeled;
  for (const ManifestEntry& e : subset.labeled) {
    const LoadedExample* ex = by_id.at(e.id);
    labeled.push_back({ex->image, ex->target});
  }
  std::vector<Panorama> unlabeled;
  for (const ManifestEntry& e : subset.unlabeled_pool)
    unlabeled.push_back(by_id.at(e.id)->image);

  std::function<double(const Predictor&, const ParamVector&, const ParamVector&)>
      scorer;
  if (!corpus.val.empty())
    scorer = [&](const Predictor& net, const ParamVector& theta,
                 const ParamVector& teacher) {
      return validation_iou3d(net, theta, teacher, corpus.val, base.predictor);
    };

  RunResult r;
  r.mode = mode;
  r.labels = labels;
  r.seed = seed;
  r.checkpoint = train(labeled, unlabeled, base, log, scorer);
  Predictor net(base.predictor);
  r.test = evaluate_checkpoint(net, r.checkpoint, corpus.test).overall;
  return r;
}

struct ExperimentSpec {
  std::vector<TrainMode> modes = {TrainMode::Supervised, TrainMode::MeanTeacher};
  std::vector<size_t> label_counts = {25};
  std::vector<uint64_t> seeds = {1, 2, 3, 4};
  TrainConfig base;
};

inline std::vector<RunResult> run_experiment(const DatasetManifest& manifest,
                                             const InMemoryCorpus& corpus,
                                             const ExperimentSpec& spec) {
  std::vector<RunResult> results;
  for (size_t labels : spec.label_counts)
    for (TrainMode mode : spec.modes)
      for (uint64_t seed : spec.seeds)
        results.push_back(
            run_single(manifest, corpus, mode, labels, seed, spec.base));
  return results;
}

struct AblationSpec {
  std::string parameter;  // lambda_max | ramp_fraction | alpha
  std::vector<double> values;
  size_t labels = 25;
  std::vector<uint64_t> seeds = {1, 2, 3, 4};
  TrainConfig base;  // mode forced to mean_teacher
};

inline std::vector<RunResult> run_ablation(const DatasetManifest& manifest,
                                           const InMemoryCorpus& corpus,
                                           const AblationSpec& spec) {
  std::vector<RunResult> results;
  for (double value : spec.values) {
    TrainConfig cfg = spec.base;
    if (spec.parameter == "lambda_max") cfg.lambda_max = value;
    else if (spec.parameter == "ramp_fraction") cfg.ramp_fraction = value;
    else if (spec.parameter == "alpha") cfg.alpha = value;
    else throw std::invalid_argument("unknown ablation parameter: " + spec.parameter);
    for (uint64_t seed : spec.seeds) {
      RunResult r = run_single(manifest, corpus, TrainMode::MeanTeacher,
                               spec.labels, seed, cfg);
      r.swept_value = value;
      results.push_back(std::move(r));
    }
  }
  return results;
}

// Evaluation CSV: one overall row plus one row per corner-count bucket, with
// mean and std over test instances for each metric.
inline void save_metrics_report(const std::filesystem::path& path,
                                const MetricsReport& rep) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << "bucket,count,iou3d_mean,iou3d_std,iou2d_mean,iou2d_std,"
         "corner_error_mean,corner_error_std,pixel_error_mean,pixel_error_std,"
         "rmse_mean,rmse_std,delta1_mean,delta1_std\n";
  auto row = [&](const std::string& name, const MetricStats& st) {
    out << name << ',' << st.count << ',' << st.mean.iou3d << ','
        << st.stddev.iou3d << ',' << st.mean.iou2d << ',' << st.stddev.iou2d
        << ',' << st.mean.corner_error << ',' << st.stddev.corner_error << ','
        << st.mean.pixel_error << ',' << st.stddev.pixel_error << ','
        << st.mean.rmse << ',' << st.stddev.rmse << ',' << st.mean.delta1
        << ',' << st.stddev.delta1 << '\n';
  };
  row("overall", rep.overall);
  for (const auto& [name, st] : rep.by_corner_count) row(name, st);
}

namespace detail {

inline void write_metric_cells(std::ostream& out, const MetricStats& st) {
  out << ',' << st.mean.iou3d << ',' << st.mean.iou2d << ','
      << st.mean.corner_error << ',' << st.mean.pixel_error << ','
      << st.mean.rmse << ',' << st.mean.delta1;
}

}  // namespace detail

// CSV report: one row per run plus, for every configuration, a `mean` and a
// `std` row over its seeds (the tables-style mean +/- std summary).
inline void save_experiment_report(const std::filesystem::path& path,
                                   const std::vector<RunResult>& results,
                                   bool ablation = false) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << (ablation ? "value" : "mode")
      << ",labels,seed,iou3d,iou2d,corner_error,pixel_error,rmse,delta1\n";

  auto key_of = [&](const RunResult& r) {
    std::ostringstream k;
    if (ablation) k << r.swept_value;
    else k << to_string(r.mode);
    k << '\xff' << r.labels;
    return k.str();
  };
  auto head_of = [&](const RunResult& r) {
    std::ostringstream k;
    if (ablation) k << r.swept_value;
    else k << to_string(r.mode);
    k << ',' << r.labels;
    return k.str();
  };

  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunResult*>> groups;
  for (const RunResult& r : results) {
    std::string key = key_of(r);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
    out << head_of(r) << ',' << r.seed;
    detail::write_metric_cells(out, r.test);
    out << '\n';
  }
  for (const std::string& key : order) {
    const auto& group = groups[key];
    std::vector<MetricValues> means;
    for (const RunResult* r : group) means.push_back(r->test.mean);
    MetricStats agg = aggregate_metrics(means);
    std::string head = head_of(*group.front());
    out << head << ",mean";
    detail::write_metric_cells(out, {agg.mean, {}, agg.count});
    out << '\n' << head << ",std";
    detail::write_metric_cells(out, {agg.stddev, {}, agg.count});
    out << '\n';
  }
}

}  // namespace layout360
