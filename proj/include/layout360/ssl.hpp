#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "layout360/core.hpp"
#include "layout360/predictor.hpp"
#include "layout360/transforms.hpp"

// Semi-supervised training engine: supervised / consistency losses, ramp-up
// and learning-rate schedules, EMA teacher update, and the three-forward-pass
// training step in supervised, mean-teacher, and pi-model modes.

namespace layout360 {

enum class TrainMode { Supervised, MeanTeacher, PiModel };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Supervised: return "supervised";
    case TrainMode::MeanTeacher: return "mean_teacher";
    case TrainMode::PiModel: return "pi_model";
  }
  return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "supervised") return TrainMode::Supervised;
  if (s == "mean_teacher" || s == "mean-teacher") return TrainMode::MeanTeacher;
  if (s == "pi_model" || s == "pi-model") return TrainMode::PiModel;
  throw std::invalid_argument("unknown training mode: " + s);
}

struct TrainConfig {
  TrainMode mode = TrainMode::MeanTeacher;
  double lambda_max = 1.0;
  double ramp_fraction = 0.30;  // share of t_max spent ramping lambda up
  double alpha = 0.999;         // EMA decay; pi_model forces 0
  double lr0 = 3e-4;
  int batch_labeled = 4;
  int batch_unlabeled = 4;
  int epochs = 10;
  uint64_t seed = 0;
  AugmentationConfig aug;
  PredictorConfig predictor;

  void validate() const {
    if (lambda_max < 0) throw std::invalid_argument("lambda_max must be >= 0");
    if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0))
      throw std::invalid_argument("ramp_fraction must be in (0,1]");
    if (alpha < 0.0 || alpha > 1.0)
      throw std::invalid_argument("alpha must be in [0,1]");
    if (batch_labeled < 1 || batch_unlabeled < 1 || epochs < 1)
      throw std::invalid_argument("batch sizes and epochs must be positive");
  }
};

// L1 on the two boundary channels, squared L2
// (Brier) on the corner channel, each as a per-column mean, averaged over the
// batch.
inline double supervised_loss(const std::vector<PredictorOutput>& pred,
                              const std::vector<BoundaryTarget>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("batch size mismatch");
  double total = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    int w = pred[i].width();
    if (w != target[i].width()) throw std::invalid_argument("width mismatch");
    double lc = 0, lf = 0, lw = 0;
    for (int j = 0; j < w; ++j) {
      lc += std::abs(pred[i].yc[j] - target[i].yc[j]);
      lf += std::abs(pred[i].yf[j] - target[i].yf[j]);
      double d = pred[i].yw[j] - target[i].yw[j];
      lw += d * d;
    }
    total += (lc + lf + lw) / w;
  }
  return total / double(pred.size());
}

// Gradient of supervised_loss w.r.t. the predictions, per batch item.
inline std::vector<BoundaryTarget> supervised_loss_grad(
    const std::vector<PredictorOutput>& pred,
    const std::vector<BoundaryTarget>& target, double scale = 1.0) {
  std::vector<BoundaryTarget> grads;
  grads.reserve(pred.size());
  double bs = scale / double(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    int w = pred[i].width();
    BoundaryTarget g(w);
    for (int j = 0; j < w; ++j) {
      double dc = pred[i].yc[j] - target[i].yc[j];
      double df = pred[i].yf[j] - target[i].yf[j];
      g.yc[j] = bs * (dc > 0 ? 1.0 : (dc < 0 ? -1.0 : 0.0)) / w;
      g.yf[j] = bs * (df > 0 ? 1.0 : (df < 0 ? -1.0 : 0.0)) / w;
      g.yw[j] = bs * 2.0 * (pred[i].yw[j] - target[i].yw[j]) / w;
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Same functional form applied to (student, teacher) prediction pairs; the
// teacher side is treated as a constant.
inline double consistency_loss(const std::vector<PredictorOutput>& student,
                               const std::vector<PredictorOutput>& teacher) {
  return supervised_loss(student, teacher);
}

inline double ramp_weight(int64_t t, int64_t ramp_end) {
  if (ramp_end <= 0) throw std::invalid_argument("ramp end must be positive");
  if (t < 0) throw std::invalid_argument("iteration must be non-negative");
  double frac = std::min<double>(double(t), double(ramp_end)) / double(ramp_end);
  double a = 1.0 - frac;
  return std::exp(-5.0 * a * a);
}

inline double lr_schedule(double lr0, int64_t t, int64_t t_max,
                          double power = 0.5) {
  if (t < 0 || t > t_max) throw std::invalid_argument("iteration out of range");
  return lr0 * std::pow(1.0 - double(t) / double(t_max), power);
}

inline void ema_update(ParamVector& teacher, const ParamVector& student,
                       double alpha) {
  if (!teacher.same_map(student))
    throw std::invalid_argument("teacher/student segment maps differ");
  for (size_t k = 0; k < teacher.values.size(); ++k)
    teacher.values[k] = alpha * teacher.values[k] + (1.0 - alpha) * student.values[k];
}

struct TrainState {
  ParamVector theta;
  ParamVector teacher;
  AdamState adam;
  int64_t t = 0;
  int64_t t_max = 0;
  int64_t ramp_end = 0;
};

struct Checkpoint {
  PredictorConfig predictor;
  std::string mode;          // training mode the checkpoint came from
  uint64_t config_fingerprint = 0;
  ParamVector theta;
  ParamVector teacher;       // empty values => no teacher (supervised)
  AdamState adam;
  int64_t t = 0;
  int64_t t_max = 0;
};

struct StepStats {
  double lr = 0.0;
  double lambda = 0.0;
  double loss_labeled = 0.0;
  double loss_unlabeled = 0.0;
};

struct LogRow {
  int64_t t = 0;
  double lr = 0.0;
  double lambda = 0.0;
  double loss_labeled = 0.0;
  double loss_unlabeled = 0.0;
  double val_iou3d = std::nan("");  // filled on validation steps
};

namespace detail {

// Forward + backward over a batch with deterministic gradient accumulation:
// per-item gradient buffers are reduced in index order regardless of the
// number of worker threads.
struct BatchPass {
  std::vector<PredictorOutput> outputs;
  std::vector<Predictor::Trace> traces;
};

inline BatchPass forward_batch(const Predictor& net, const ParamVector& theta,
                               const std::vector<Panorama>& batch,
                               bool stochastic, uint64_t seed_base,
                               bool keep_traces) {
  BatchPass pass;
  pass.outputs.resize(batch.size());
  if (keep_traces) pass.traces.resize(batch.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < int(batch.size()); ++i) {
    pass.outputs[i] =
        net.forward(theta, batch[i], stochastic, seed_base + uint64_t(i),
                    keep_traces ? &pass.traces[i] : nullptr);
  }
  return pass;
}

inline void backward_batch(const Predictor& net, const ParamVector& theta,
                           const BatchPass& pass,
                           const std::vector<BoundaryTarget>& upstream,
                           ParamVector& grad) {
  std::vector<ParamVector> partial(pass.outputs.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < int(pass.outputs.size()); ++i) {
    partial[i] = grad;  // zero-valued clone with the same segment map
    std::fill(partial[i].values.begin(), partial[i].values.end(), 0.0);
    net.backward(theta, pass.traces[i], pass.outputs[i], upstream[i], partial[i]);
  }
  for (const ParamVector& p : partial)
    for (size_t k = 0; k < grad.values.size(); ++k) grad.values[k] += p.values[k];
}

}  // namespace detail

// One optimization step: three forward passes, compound loss, Adam update on
// the student, then the teacher update for the active mode. Batches arrive
// already augmented per the branch rules.
inline StepStats train_step(const Predictor& net, TrainState& state,
                            const std::vector<Panorama>& x_l,
                            const std::vector<BoundaryTarget>& y_l,
                            const std::vector<Panorama>& x_u_student,
                            const std::vector<Panorama>& x_u_teacher,
                            const TrainConfig& cfg) {
  cfg.validate();
  StepStats stats;
  stats.lambda = cfg.lambda_max * ramp_weight(state.t, state.ramp_end);
  stats.lr = lr_schedule(cfg.lr0, state.t, state.t_max);

  const uint64_t drop_base = detail::splitmix64(cfg.seed ^ 0xd509f37159a329ULL) +
                             uint64_t(state.t) * 4096;

  auto labeled = detail::forward_batch(net, state.theta, x_l, true, drop_base, true);
  stats.loss_labeled = supervised_loss(labeled.outputs, y_l);

  ParamVector grad = net.zero_params();
  detail::backward_batch(net, state.theta, labeled,
                         supervised_loss_grad(labeled.outputs, y_l), grad);

  bool use_unlabeled = cfg.mode != TrainMode::Supervised && stats.lambda > 0.0 &&
                       !x_u_student.empty();
  if (use_unlabeled) {
    auto student = detail::forward_batch(net, state.theta, x_u_student, true,
                                         drop_base + 1024, true);
    bool pi = cfg.mode == TrainMode::PiModel;
    const ParamVector& teacher_params = pi ? state.theta : state.teacher;
    auto teacher = detail::forward_batch(net, teacher_params, x_u_teacher, true,
                                         drop_base + 2048, pi);
    stats.loss_unlabeled = consistency_loss(student.outputs, teacher.outputs);

    auto up_student = supervised_loss_grad(student.outputs, teacher.outputs,
                                           stats.lambda);
    detail::backward_batch(net, state.theta, student, up_student, grad);
    if (pi) {
      // Gradients flow through both unlabeled passes: the teacher-side
      // upstream is the negation of the student-side one.
      auto up_teacher = up_student;
      for (BoundaryTarget& g : up_teacher)
        for (int j = 0; j < g.width(); ++j) {
          g.yc[j] = -g.yc[j];
          g.yf[j] = -g.yf[j];
          g.yw[j] = -g.yw[j];
        }
      detail::backward_batch(net, state.theta, teacher, up_teacher, grad);
    }
  }

  double total = stats.loss_labeled + stats.lambda * stats.loss_unlabeled;
  if (!std::isfinite(total))
    throw NumericError("non-finite training loss at step " +
                       std::to_string(state.t));

  adam_step(state.theta, grad, state.adam, stats.lr);

  switch (cfg.mode) {
    case TrainMode::MeanTeacher:
      ema_update(state.teacher, state.theta, cfg.alpha);
      break;
    case TrainMode::PiModel:
      state.teacher = state.theta;  // alpha = 0, shared parameters
      break;
    case TrainMode::Supervised:
      break;
  }
  ++state.t;
  return stats;
}

struct LabeledExample {
  Panorama image;
  BoundaryTarget target;
};

// Full training loop per the outer-loop procedure: epochs iterate over the
// unlabeled set, the labeled loader cycles with reshuffling, and the best
// checkpoint is selected by the supplied validation scorer (3D IoU by
// convention; see the experiment harness).
inline Checkpoint train(
    const std::vector<LabeledExample>& labeled,
    const std::vector<Panorama>& unlabeled, const TrainConfig& cfg,
    std::vector<LogRow>* log = nullptr,
    const std::function<double(const Predictor&, const ParamVector& theta,
                               const ParamVector& teacher)>& validate = {}) {
  cfg.validate();
  if (labeled.empty()) throw std::invalid_argument("labeled set is empty");
  if (unlabeled.empty() && cfg.mode != TrainMode::Supervised)
    throw std::invalid_argument("unlabeled set is empty in SSL mode");

  Predictor net(cfg.predictor);
  TrainState state;
  {
    auto rng = derive_rng(cfg.seed, 0, 0);
    state.theta = net.init_params(rng);
  }
  state.teacher = state.theta;

  // Iterations are counted over the unlabeled pool; the pool is still used
  // for step accounting in supervised mode so that schedules line up across
  // modes (supervised training simply never reads it).
  size_t pool = unlabeled.empty() ? labeled.size() : unlabeled.size();
  int per_batch = unlabeled.empty() ? cfg.batch_labeled : cfg.batch_unlabeled;
  int64_t steps_per_epoch = int64_t((pool + per_batch - 1) / per_batch);
  state.t_max = int64_t(cfg.epochs) * steps_per_epoch;
  state.ramp_end = std::max<int64_t>(1, int64_t(cfg.ramp_fraction * double(state.t_max)));

  std::vector<size_t> labeled_order(labeled.size());
  for (size_t i = 0; i < labeled_order.size(); ++i) labeled_order[i] = i;
  size_t labeled_pos = 0;
  uint64_t labeled_shuffles = 0;
  {
    auto rng = derive_rng(cfg.seed, 10, labeled_shuffles++);
    std::shuffle(labeled_order.begin(), labeled_order.end(), rng);
  }

  std::vector<size_t> unlabeled_order(unlabeled.size());
  for (size_t i = 0; i < unlabeled_order.size(); ++i) unlabeled_order[i] = i;

  double best_score = -std::numeric_limits<double>::infinity();
  ParamVector best_theta = state.theta;
  ParamVector best_teacher = state.teacher;
  AdamState best_adam;
  int64_t best_t = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    {
      auto rng = derive_rng(cfg.seed, 11, uint64_t(epoch));
      std::shuffle(unlabeled_order.begin(), unlabeled_order.end(), rng);
    }
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      // Labeled batch: cycle with reshuffle on exhaustion.
      std::vector<Panorama> x_l;
      std::vector<BoundaryTarget> y_l;
      for (int b = 0; b < cfg.batch_labeled; ++b) {
        if (labeled_pos >= labeled_order.size()) {
          auto rng = derive_rng(cfg.seed, 10, labeled_shuffles++);
          std::shuffle(labeled_order.begin(), labeled_order.end(), rng);
          labeled_pos = 0;
        }
        const LabeledExample& ex = labeled[labeled_order[labeled_pos++]];
        Panorama img = ex.image;
        BoundaryTarget tgt = ex.target;
        auto rng = derive_rng(cfg.seed, 1, (uint64_t(state.t) << 8) | uint64_t(b));
        augment_labeled(img, tgt, rng, cfg.aug);
        x_l.push_back(std::move(img));
        y_l.push_back(std::move(tgt));
      }

      std::vector<Panorama> x_u_student, x_u_teacher;
      if (cfg.mode != TrainMode::Supervised && cfg.lambda_max > 0.0) {
        for (int b = 0; b < cfg.batch_unlabeled; ++b) {
          size_t idx = unlabeled_order[size_t((s * cfg.batch_unlabeled + b) %
                                              int64_t(unlabeled.size()))];
          Panorama st, te;
          auto rng = derive_rng(cfg.seed, 2, (uint64_t(state.t) << 8) | uint64_t(b));
          augment_unlabeled(unlabeled[idx], st, te, rng, cfg.aug);
          x_u_student.push_back(std::move(st));
          x_u_teacher.push_back(std::move(te));
        }
      }

      StepStats stats = train_step(net, state, x_l, y_l, x_u_student,
                                   x_u_teacher, cfg);
      if (log)
        log->push_back({state.t - 1, stats.lr, stats.lambda, stats.loss_labeled,
                        stats.loss_unlabeled, std::nan("")});
    }

    if (validate) {
      double score = validate(net, state.theta, state.teacher);
      if (log && !log->empty()) log->back().val_iou3d = score;
      if (score > best_score) {
        best_score = score;
        best_theta = state.theta;
        best_teacher = state.teacher;
        best_adam = state.adam;
        best_t = state.t;
      }
    }
  }

  Checkpoint ckpt;
  ckpt.predictor = cfg.predictor;
  ckpt.mode = to_string(cfg.mode);
  ckpt.theta = validate ? best_theta : state.theta;
  ckpt.adam = validate ? best_adam : state.adam;
  ckpt.t = validate ? best_t : state.t;
  ckpt.t_max = state.t_max;
  if (cfg.mode == TrainMode::Supervised) {
    ckpt.teacher = ckpt.theta;
    ckpt.teacher.values.clear();  // no teacher: predict_eval falls back to theta
  } else {
    ckpt.teacher = validate ? best_teacher : state.teacher;
  }
  return ckpt;
}

// Test-time prediction: the elementwise average of the student and teacher
// outputs, dropout disabled, no test-time augmentation. Supervised
// checkpoints carry no teacher and fall back to the student alone.
inline BoundaryTarget predict_eval(const Predictor& net, const Checkpoint& ckpt,
                                   const Panorama& x) {
  PredictorOutput s = net.forward(ckpt.theta, x, false, 0);
  if (ckpt.teacher.values.empty()) return s;
  PredictorOutput t = net.forward(ckpt.teacher, x, false, 0);
  BoundaryTarget out(s.width());
  for (int j = 0; j < s.width(); ++j) {
    out.yc[j] = 0.5 * (s.yc[j] + t.yc[j]);
    out.yf[j] = 0.5 * (s.yf[j] + t.yf[j]);
    out.yw[j] = 0.5 * (s.yw[j] + t.yw[j]);
  }
  return out;
}

}  // namespace layout360
