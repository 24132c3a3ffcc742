// Command-line surface: gen-data / train / eval / experiment / ablate.
// Every command is a pure function of its flags, config files, input
// directory, and seed; reruns produce identical outputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "layout360/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace layout360;

namespace {

// Training configuration JSON: every field optional, defaults as below.
// {
//   "mode": "mean_teacher",         // supervised | mean_teacher | pi_model
//   "lambda_max": 1.0, "ramp_fraction": 0.3, "alpha": 0.999,
//   "lr0": 3e-4, "batch_labeled": 4, "batch_unlabeled": 4, "epochs": 10,
//   "aug": {"stretch_min": 0.5, "stretch_max": 1.5,
//           "gamma_min": 0.5, "gamma_max": 2.0, "flip_prob": 0.5},
//   "predictor": {"in_h": 64, "in_w": 256, "trunk_channels": [6,12,24,24],
//                 "mix_channels": 48, "mix_kernel": 5, "dropout_p": 0.5}
// }
TrainConfig parse_train_config(const json& j) {
  TrainConfig cfg;
  if (j.contains("mode")) cfg.mode = train_mode_from_string(j.at("mode"));
  cfg.lambda_max = j.value("lambda_max", cfg.lambda_max);
  cfg.ramp_fraction = j.value("ramp_fraction", cfg.ramp_fraction);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.lr0 = j.value("lr0", cfg.lr0);
  cfg.batch_labeled = j.value("batch_labeled", cfg.batch_labeled);
  cfg.batch_unlabeled = j.value("batch_unlabeled", cfg.batch_unlabeled);
  cfg.epochs = j.value("epochs", cfg.epochs);
  if (j.contains("aug")) {
    const json& a = j.at("aug");
    cfg.aug.stretch_min = a.value("stretch_min", cfg.aug.stretch_min);
    cfg.aug.stretch_max = a.value("stretch_max", cfg.aug.stretch_max);
    cfg.aug.gamma_min = a.value("gamma_min", cfg.aug.gamma_min);
    cfg.aug.gamma_max = a.value("gamma_max", cfg.aug.gamma_max);
    cfg.aug.flip_prob = a.value("flip_prob", cfg.aug.flip_prob);
  }
  if (j.contains("predictor")) {
    const json& p = j.at("predictor");
    cfg.predictor.in_h = p.value("in_h", cfg.predictor.in_h);
    cfg.predictor.in_w = p.value("in_w", cfg.predictor.in_w);
    if (p.contains("trunk_channels"))
      cfg.predictor.trunk_channels = p.at("trunk_channels").get<std::vector<int>>();
    cfg.predictor.mix_channels = p.value("mix_channels", cfg.predictor.mix_channels);
    cfg.predictor.mix_kernel = p.value("mix_kernel", cfg.predictor.mix_kernel);
    cfg.predictor.dropout_p = p.value("dropout_p", cfg.predictor.dropout_p);
  }
  cfg.validate();
  return cfg;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return json::parse(in);
}

void apply_worker_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("LAYOUT360_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

int run(int argc, char** argv) {
  CLI::App app{"Semi-supervised 360-degree room layout estimation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  std::string gen_out;
  int rooms = 550, min_corners = 4, max_corners = 12, height = 64, width = 256;
  int val_count = 50, test_count = 100;
  uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output corpus directory")->required();
  gen->add_option("--rooms", rooms, "Total number of rooms");
  gen->add_option("--min-corners", min_corners, "Minimum corner count (even)");
  gen->add_option("--max-corners", max_corners, "Maximum corner count (even)");
  gen->add_option("--height", height, "Panorama height in pixels");
  gen->add_option("--width", width, "Panorama width in pixels");
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--val", val_count, "Validation split size");
  gen->add_option("--test", test_count, "Test split size");

  // train
  auto* tr = app.add_subcommand("train", "Train one model");
  std::string tr_config, tr_data, tr_mode, tr_out;
  size_t tr_labels = 25;
  uint64_t tr_seed = 0;
  tr->add_option("--config", tr_config, "Training config JSON");
  tr->add_option("--data", tr_data, "Corpus directory")->required();
  tr->add_option("--mode", tr_mode, "supervised | mean-teacher | pi-model");
  tr->add_option("--labels", tr_labels, "Number of labeled training scenes");
  tr->add_option("--seed", tr_seed, "Training / label-subset seed");
  tr->add_option("--out", tr_out, "Checkpoint output path")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_report;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--data", ev_data, "Corpus directory")->required();
  ev->add_option("--split", ev_split, "Split to evaluate (default test)");
  ev->add_option("--report", ev_report, "Report CSV output path")->required();

  // experiment
  auto* ex = app.add_subcommand("experiment", "Run the comparison grid");
  std::string ex_spec, ex_out;
  ex->add_option("--spec", ex_spec, "Experiment spec JSON")->required();
  ex->add_option("--out", ex_out, "Output directory")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Sweep one mean-teacher hyperparameter");
  std::string ab_param, ab_spec, ab_out = ".";
  std::vector<double> ab_values;
  ab->add_option("--param", ab_param, "lambda | rampup | alpha")->required();
  ab->add_option("--values", ab_values, "Swept values")->required();
  ab->add_option("--spec", ab_spec, "Experiment spec JSON")->required();
  ab->add_option("--out", ab_out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  apply_worker_env();

  if (gen->parsed()) {
    generate_corpus(gen_out, rooms, min_corners, max_corners, height, width,
                    gen_seed, val_count, test_count);
    std::cout << "corpus written to " << gen_out << "\n";
    return 0;
  }

  if (tr->parsed()) {
    TrainConfig cfg = tr_config.empty() ? TrainConfig{}
                                        : parse_train_config(load_json(tr_config));
    if (!tr_mode.empty()) cfg.mode = train_mode_from_string(tr_mode);
    DatasetManifest manifest = load_manifest(fs::path(tr_data) / "manifest.json");
    InMemoryCorpus corpus = load_corpus(tr_data, manifest);
    std::vector<LogRow> log;
    RunResult r = run_single(manifest, corpus, cfg.mode, tr_labels, tr_seed,
                             cfg, &log);
    save_checkpoint(tr_out, r.checkpoint);
    save_train_log(fs::path(tr_out).string() + ".log.csv", log);
    std::cout << "checkpoint written to " << tr_out << "\n"
              << "test 3D IoU " << r.test.mean.iou3d << ", corner error "
              << r.test.mean.corner_error << "\n";
    return 0;
  }

  if (ev->parsed()) {
    Checkpoint ckpt = load_checkpoint(ev_ckpt);
    DatasetManifest manifest = load_manifest(fs::path(ev_data) / "manifest.json");
    auto it = manifest.splits.find(ev_split);
    if (it == manifest.splits.end())
      throw std::invalid_argument("unknown split: " + ev_split);
    std::vector<LoadedExample> split = load_entries(ev_data, it->second);
    Predictor net(ckpt.predictor);
    MetricsReport rep = evaluate_checkpoint(net, ckpt, split);
    save_metrics_report(ev_report, rep);
    std::cout << "report written to " << ev_report << " (3D IoU "
              << rep.overall.mean.iou3d << ")\n";
    return 0;
  }

  // Experiment spec JSON:
  // {"data": "corpus_dir", "modes": ["supervised","mean_teacher"],
  //  "label_counts": [25], "seeds": [1,2,3,4], "train": { ...config... }}
  if (ex->parsed() || ab->parsed()) {
    json spec_json = load_json(ex->parsed() ? ex_spec : ab_spec);
    fs::path data_dir = spec_json.at("data").get<std::string>();
    DatasetManifest manifest = load_manifest(data_dir / "manifest.json");
    InMemoryCorpus corpus = load_corpus(data_dir, manifest);
    TrainConfig base = spec_json.contains("train")
                           ? parse_train_config(spec_json.at("train"))
                           : TrainConfig{};
    std::vector<uint64_t> seeds =
        spec_json.value("seeds", std::vector<uint64_t>{1, 2, 3, 4});

    if (ex->parsed()) {
      ExperimentSpec spec;
      spec.base = base;
      spec.seeds = seeds;
      spec.label_counts =
          spec_json.value("label_counts", std::vector<size_t>{25});
      if (spec_json.contains("modes")) {
        spec.modes.clear();
        for (const auto& m : spec_json.at("modes"))
          spec.modes.push_back(train_mode_from_string(m.get<std::string>()));
      }
      std::vector<RunResult> results = run_experiment(manifest, corpus, spec);
      fs::create_directories(ex_out);
      save_experiment_report(fs::path(ex_out) / "experiment.csv", results);
      std::cout << "report written to " << (fs::path(ex_out) / "experiment.csv")
                << "\n";
      return 0;
    }

    AblationSpec spec;
    spec.base = base;
    spec.seeds = seeds;
    spec.labels = spec_json.value("label_counts", std::vector<size_t>{25}).front();
    spec.values = ab_values;
    if (ab_param == "lambda") spec.parameter = "lambda_max";
    else if (ab_param == "rampup") spec.parameter = "ramp_fraction";
    else if (ab_param == "alpha") spec.parameter = "alpha";
    else throw std::invalid_argument("unknown ablation parameter: " + ab_param);
    std::vector<RunResult> results = run_ablation(manifest, corpus, spec);
    fs::create_directories(ab_out);
    fs::path out = fs::path(ab_out) / ("ablate_" + ab_param + ".csv");
    save_experiment_report(out, results, /*ablation=*/true);
    std::cout << "report written to " << out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    json err;
    err["error"] = typeid(e).name();
    err["message"] = e.what();
    std::cerr << err.dump() << std::endl;
    return 1;
  }
}
