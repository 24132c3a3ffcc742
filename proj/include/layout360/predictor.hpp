#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "layout360/core.hpp"

// Reference per-column boundary predictor with hand-derived reverse-mode
// gradients, and the Adam optimizer. Architecture: a strided convolutional
// trunk that halves the height per layer (circular padding in width, zero in
// height), dropout on the collapsed per-column features, one circular
// column-mixing 1D convolution, and three per-column linear heads squashed
// into the target ranges. The width axis is never strided, so the output
// width always equals the input width.

namespace layout360 {

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Flat parameter array with a named segment map.
struct ParamVector {
  struct Segment {
    std::string name;
    size_t offset = 0;
    size_t length = 0;
  };
  std::vector<Segment> segments;
  std::vector<double> values;

  size_t add_segment(const std::string& name, size_t length) {
    size_t off = values.size();
    segments.push_back({name, off, length});
    values.resize(off + length, 0.0);
    return off;
  }

  std::span<double> seg(size_t k) {
    return {values.data() + segments[k].offset, segments[k].length};
  }
  std::span<const double> seg(size_t k) const {
    return {values.data() + segments[k].offset, segments[k].length};
  }

  bool same_map(const ParamVector& o) const {
    if (segments.size() != o.segments.size()) return false;
    for (size_t k = 0; k < segments.size(); ++k)
      if (segments[k].name != o.segments[k].name ||
          segments[k].offset != o.segments[k].offset ||
          segments[k].length != o.segments[k].length)
        return false;
    return true;
  }
};

// Per-column prediction, same shape as BoundaryTarget.
using PredictorOutput = BoundaryTarget;

struct PredictorConfig {
  int in_h = 64;
  int in_w = 256;
  std::vector<int> trunk_channels = {6, 12, 24, 24};
  int mix_channels = 48;
  int mix_kernel = 5;
  double dropout_p = 0.5;
};

class Predictor {
public:
  explicit Predictor(PredictorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.in_h < 2 || cfg_.in_w < 4 || cfg_.in_w % 2 != 0)
      throw std::invalid_argument("predictor input must be at least 2x4 with even width");
    if (cfg_.dropout_p < 0.0 || cfg_.dropout_p >= 1.0)
      throw std::invalid_argument("dropout probability must be in [0,1)");
    if (cfg_.mix_kernel % 2 == 0)
      throw std::invalid_argument("mix kernel width must be odd");
    int h = cfg_.in_h;
    for (int c : cfg_.trunk_channels) {
      (void)c;
      if (h % 2 != 0) throw std::invalid_argument("trunk over-divides the height");
      h /= 2;
    }
    trunk_out_h_ = h;
    feat_ = cfg_.trunk_channels.back() * h;
  }

  const PredictorConfig& config() const { return cfg_; }
  int column_features() const { return feat_; }

  ParamVector zero_params() const {
    ParamVector p;
    int cin = 3;
    for (size_t k = 0; k < cfg_.trunk_channels.size(); ++k) {
      int cout = cfg_.trunk_channels[k];
      p.add_segment("conv" + std::to_string(k) + ".w", size_t(cout) * cin * 9);
      p.add_segment("conv" + std::to_string(k) + ".b", cout);
      cin = cout;
    }
    p.add_segment("mix.w", size_t(cfg_.mix_channels) * feat_ * cfg_.mix_kernel);
    p.add_segment("mix.b", cfg_.mix_channels);
    p.add_segment("head.w", size_t(3) * cfg_.mix_channels);
    p.add_segment("head.b", 3);
    return p;
  }

  ParamVector init_params(std::mt19937_64& rng) const {
    ParamVector p = zero_params();
    std::normal_distribution<double> gauss(0.0, 1.0);
    int cin = 3;
    size_t seg = 0;
    for (size_t k = 0; k < cfg_.trunk_channels.size(); ++k) {
      double scale = std::sqrt(2.0 / (cin * 9.0));
      for (double& v : p.seg(seg)) v = scale * gauss(rng);
      seg += 2;  // biases stay zero
      cin = cfg_.trunk_channels[k];
    }
    double mix_scale = std::sqrt(2.0 / (double(feat_) * cfg_.mix_kernel));
    for (double& v : p.seg(seg)) v = mix_scale * gauss(rng);
    seg += 2;
    double head_scale = std::sqrt(1.0 / cfg_.mix_channels);
    for (double& v : p.seg(seg)) v = head_scale * gauss(rng);
    return p;
  }

  // Recorded intermediates of one forward pass, consumed by backward().
  struct Trace {
    std::vector<std::vector<double>> trunk;  // post-ReLU, includes input at [0]
    std::vector<double> dropout_mask;        // feat x W (scaled), empty if off
    std::vector<double> cols;                // post-dropout features, feat x W
    std::vector<double> mix;                 // post-ReLU, M x W
    std::vector<double> head;                // pre-squash, 3 x W
  };

  PredictorOutput forward(const ParamVector& theta, const Panorama& x,
                          bool stochastic, uint64_t dropout_seed,
                          Trace* trace = nullptr) const {
    if (x.height != cfg_.in_h || x.width != cfg_.in_w)
      throw std::invalid_argument("input shape does not match predictor config");
    const int w = cfg_.in_w;
    Trace local;
    Trace& tr = trace ? *trace : local;
    tr.trunk.clear();
    tr.trunk.push_back(x.data);

    int cin = 3, hin = cfg_.in_h;
    size_t seg = 0;
    for (size_t k = 0; k < cfg_.trunk_channels.size(); ++k) {
      int cout = cfg_.trunk_channels[k];
      int hout = hin / 2;
      std::vector<double> out(size_t(cout) * hout * w);
      conv2d_forward(tr.trunk.back(), theta.seg(seg), theta.seg(seg + 1), cin,
                     hin, cout, hout, w, out);
      for (double& v : out) v = v > 0.0 ? v : 0.0;
      tr.trunk.push_back(std::move(out));
      cin = cout;
      hin = hout;
      seg += 2;
    }

    // Collapse height: (C, h, W) features are already per-column contiguous
    // in (c*h) order when read column-wise.
    tr.cols = tr.trunk.back();  // interpreted as feat_ x W with feat index c*h+i
    if (stochastic && cfg_.dropout_p > 0.0) {
      std::mt19937_64 rng(dropout_seed);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double keep = 1.0 - cfg_.dropout_p;
      tr.dropout_mask.resize(tr.cols.size());
      for (size_t k = 0; k < tr.cols.size(); ++k) {
        tr.dropout_mask[k] = unif(rng) < keep ? 1.0 / keep : 0.0;
        tr.cols[k] *= tr.dropout_mask[k];
      }
    } else {
      tr.dropout_mask.clear();
    }

    tr.mix.assign(size_t(cfg_.mix_channels) * w, 0.0);
    conv1d_forward(tr.cols, theta.seg(seg), theta.seg(seg + 1), feat_,
                   cfg_.mix_channels, cfg_.mix_kernel, w, tr.mix);
    for (double& v : tr.mix) v = v > 0.0 ? v : 0.0;
    seg += 2;

    tr.head.assign(size_t(3) * w, 0.0);
    auto hw = theta.seg(seg);
    auto hb = theta.seg(seg + 1);
    for (int o = 0; o < 3; ++o) {
      double* dst = tr.head.data() + size_t(o) * w;
      for (int m = 0; m < cfg_.mix_channels; ++m) {
        double wv = hw[size_t(o) * cfg_.mix_channels + m];
        const double* src = tr.mix.data() + size_t(m) * w;
        for (int j = 0; j < w; ++j) dst[j] += wv * src[j];
      }
      for (int j = 0; j < w; ++j) dst[j] += hb[o];
    }

    PredictorOutput out(w);
    for (int j = 0; j < w; ++j) {
      out.yc[j] = 0.5 * kPi * std::tanh(tr.head[j]);
      out.yf[j] = 0.5 * kPi * std::tanh(tr.head[size_t(w) + j]);
      out.yw[j] = 1.0 / (1.0 + std::exp(-tr.head[2 * size_t(w) + j]));
      if (!std::isfinite(out.yc[j]) || !std::isfinite(out.yf[j]) ||
          !std::isfinite(out.yw[j]))
        throw NumericError("non-finite activation in forward pass");
    }
    return out;
  }

  // Accumulates dL/dtheta into `grad` for the recorded pass. `upstream` holds
  // dL/d(yc, yf, yw).
  void backward(const ParamVector& theta, const Trace& trace,
                const PredictorOutput& out, const BoundaryTarget& upstream,
                ParamVector& grad) const {
    const int w = cfg_.in_w;
    if (trace.head.empty()) throw std::logic_error("backward without forward");

    std::vector<double> dcur;
    std::vector<double> dhead(size_t(3) * w);
    for (int j = 0; j < w; ++j) {
      double tc = out.yc[j] / (0.5 * kPi);
      double tf = out.yf[j] / (0.5 * kPi);
      dhead[j] = upstream.yc[j] * 0.5 * kPi * (1.0 - tc * tc);
      dhead[size_t(w) + j] = upstream.yf[j] * 0.5 * kPi * (1.0 - tf * tf);
      dhead[2 * size_t(w) + j] = upstream.yw[j] * out.yw[j] * (1.0 - out.yw[j]);
    }

    size_t seg = theta.segments.size() - 1;
    // head
    {
      auto hw = theta.seg(seg - 1);
      auto gw = grad.seg(seg - 1);
      auto gb = grad.seg(seg);
      std::vector<double> dmix(trace.mix.size(), 0.0);
      for (int o = 0; o < 3; ++o) {
        const double* dh = dhead.data() + size_t(o) * w;
        for (int j = 0; j < w; ++j) gb[o] += dh[j];
        for (int m = 0; m < cfg_.mix_channels; ++m) {
          const double* mix = trace.mix.data() + size_t(m) * w;
          double* dm = dmix.data() + size_t(m) * w;
          double wv = hw[size_t(o) * cfg_.mix_channels + m];
          double acc = 0.0;
          for (int j = 0; j < w; ++j) {
            acc += dh[j] * mix[j];
            dm[j] += dh[j] * wv;
          }
          gw[size_t(o) * cfg_.mix_channels + m] += acc;
        }
      }
      for (size_t k = 0; k < dmix.size(); ++k)
        if (trace.mix[k] <= 0.0) dmix[k] = 0.0;
      dcur = std::move(dmix);
    }
    seg -= 2;

    // mix conv1d
    {
      std::vector<double> dcols(trace.cols.size(), 0.0);
      conv1d_backward(trace.cols, theta.seg(seg - 1), dcur, feat_,
                      cfg_.mix_channels, cfg_.mix_kernel, w, grad.seg(seg - 1),
                      grad.seg(seg), dcols);
      if (!trace.dropout_mask.empty())
        for (size_t k = 0; k < dcols.size(); ++k) dcols[k] *= trace.dropout_mask[k];
      dcur = std::move(dcols);
    }
    seg -= 2;

    // trunk, last to first
    int hin = trunk_out_h_;
    for (int k = int(cfg_.trunk_channels.size()) - 1; k >= 0; --k) {
      int cout = cfg_.trunk_channels[k];
      int cin = k == 0 ? 3 : cfg_.trunk_channels[k - 1];
      int hout = hin;
      hin = hout * 2;
      // ReLU gate on this layer's output
      const std::vector<double>& act = trace.trunk[k + 1];
      for (size_t i = 0; i < dcur.size(); ++i)
        if (act[i] <= 0.0) dcur[i] = 0.0;
      std::vector<double> din(size_t(cin) * hin * w, 0.0);
      conv2d_backward(trace.trunk[k], theta.seg(seg - 1), dcur, cin, hin, cout,
                      hout, w, grad.seg(seg - 1), grad.seg(seg),
                      k > 0 ? &din : nullptr);
      if (k > 0) dcur = std::move(din);
      seg -= 2;
    }
  }

private:
  // 3x3 conv, stride 2 in height, circular width padding, zero height padding.
  void conv2d_forward(const std::vector<double>& in, std::span<const double> wgt,
                      std::span<const double> bias, int cin, int hin, int cout,
                      int hout, int w, std::vector<double>& out) const {
    for (int o = 0; o < cout; ++o) {
      double* outc = out.data() + size_t(o) * hout * w;
      for (int i = 0; i < hout * w; ++i) outc[i] = bias[o];
      for (int ci = 0; ci < cin; ++ci) {
        const double* inc = in.data() + size_t(ci) * hin * w;
        const double* wk = wgt.data() + (size_t(o) * cin + ci) * 9;
        for (int i = 0; i < hout; ++i) {
          double* orow = outc + size_t(i) * w;
          for (int di = -1; di <= 1; ++di) {
            int si = 2 * i + di;
            if (si < 0 || si >= hin) continue;
            const double* irow = inc + size_t(si) * w;
            const double* wr = wk + (di + 1) * 3;
            // unrolled over dj with circular wrap at the seams
            orow[0] += wr[0] * irow[w - 1] + wr[1] * irow[0] + wr[2] * irow[1];
            for (int j = 1; j < w - 1; ++j)
              orow[j] += wr[0] * irow[j - 1] + wr[1] * irow[j] + wr[2] * irow[j + 1];
            orow[w - 1] += wr[0] * irow[w - 2] + wr[1] * irow[w - 1] + wr[2] * irow[0];
          }
        }
      }
    }
  }

  void conv2d_backward(const std::vector<double>& in, std::span<const double> wgt,
                       const std::vector<double>& dout, int cin, int hin,
                       int cout, int hout, int w, std::span<double> gw,
                       std::span<double> gb, std::vector<double>* din) const {
    for (int o = 0; o < cout; ++o) {
      const double* doc = dout.data() + size_t(o) * hout * w;
      double accb = 0.0;
      for (int i = 0; i < hout * w; ++i) accb += doc[i];
      gb[o] += accb;
      for (int ci = 0; ci < cin; ++ci) {
        const double* inc = in.data() + size_t(ci) * hin * w;
        double* gwk = gw.data() + (size_t(o) * cin + ci) * 9;
        const double* wk = wgt.data() + (size_t(o) * cin + ci) * 9;
        double* dic = din ? din->data() + size_t(ci) * hin * w : nullptr;
        for (int i = 0; i < hout; ++i) {
          const double* drow = doc + size_t(i) * w;
          for (int di = -1; di <= 1; ++di) {
            int si = 2 * i + di;
            if (si < 0 || si >= hin) continue;
            const double* irow = inc + size_t(si) * w;
            double* dirow = dic ? dic + size_t(si) * w : nullptr;
            const double* wr = wk + (di + 1) * 3;
            double* gwr = gwk + (di + 1) * 3;
            // Seam columns handled as scalars; the interior runs over
            // contiguous ranges so the compiler can vectorize.
            double d0 = drow[0], dl = drow[w - 1];
            double g0 = d0 * irow[w - 1] + dl * irow[w - 2];
            double g1 = d0 * irow[0] + dl * irow[w - 1];
            double g2 = d0 * irow[1] + dl * irow[0];
            for (int j = 1; j < w - 1; ++j) {
              double d = drow[j];
              g0 += d * irow[j - 1];
              g1 += d * irow[j];
              g2 += d * irow[j + 1];
            }
            if (dirow) {
              dirow[w - 1] += d0 * wr[0] + dl * wr[1];
              dirow[0] += d0 * wr[1] + dl * wr[2];
              dirow[1] += d0 * wr[2];
              dirow[w - 2] += dl * wr[0];
              for (int j = 1; j < w - 1; ++j) dirow[j - 1] += drow[j] * wr[0];
              for (int j = 1; j < w - 1; ++j) dirow[j] += drow[j] * wr[1];
              for (int j = 1; j < w - 1; ++j) dirow[j + 1] += drow[j] * wr[2];
            }
            gwr[0] += g0;
            gwr[1] += g1;
            gwr[2] += g2;
          }
        }
      }
    }
  }

  void conv1d_forward(const std::vector<double>& in, std::span<const double> wgt,
                      std::span<const double> bias, int fin, int fout, int ksz,
                      int w, std::vector<double>& out) const {
    int half = ksz / 2;
    for (int o = 0; o < fout; ++o) {
      double* oc = out.data() + size_t(o) * w;
      for (int j = 0; j < w; ++j) oc[j] = bias[o];
      for (int f = 0; f < fin; ++f) {
        const double* ic = in.data() + size_t(f) * w;
        const double* wk = wgt.data() + (size_t(o) * fin + f) * ksz;
        for (int dk = 0; dk < ksz; ++dk) {
          double wv = wk[dk];
          int off = dk - half;
          // Circular shift as three contiguous (vectorizable) ranges.
          int lo = std::max(0, -off), hi = std::min(w, w - off);
          for (int j = 0; j < lo; ++j) oc[j] += wv * ic[j + off + w];
          for (int j = lo; j < hi; ++j) oc[j] += wv * ic[j + off];
          for (int j = hi; j < w; ++j) oc[j] += wv * ic[j + off - w];
        }
      }
    }
  }

  void conv1d_backward(const std::vector<double>& in, std::span<const double> wgt,
                       const std::vector<double>& dout, int fin, int fout,
                       int ksz, int w, std::span<double> gw, std::span<double> gb,
                       std::vector<double>& din) const {
    int half = ksz / 2;
    for (int o = 0; o < fout; ++o) {
      const double* doc = dout.data() + size_t(o) * w;
      double accb = 0.0;
      for (int j = 0; j < w; ++j) accb += doc[j];
      gb[o] += accb;
      for (int f = 0; f < fin; ++f) {
        const double* ic = in.data() + size_t(f) * w;
        double* dic = din.data() + size_t(f) * w;
        const double* wk = wgt.data() + (size_t(o) * fin + f) * ksz;
        double* gwk = gw.data() + (size_t(o) * fin + f) * ksz;
        for (int dk = 0; dk < ksz; ++dk) {
          double wv = wk[dk];
          double acc = 0.0;
          int off = dk - half;
          int lo = std::max(0, -off), hi = std::min(w, w - off);
          for (int j = 0; j < lo; ++j) acc += doc[j] * ic[j + off + w];
          for (int j = lo; j < hi; ++j) acc += doc[j] * ic[j + off];
          for (int j = hi; j < w; ++j) acc += doc[j] * ic[j + off - w];
          for (int j = 0; j < lo; ++j) dic[j + off + w] += doc[j] * wv;
          for (int j = lo; j < hi; ++j) dic[j + off] += doc[j] * wv;
          for (int j = hi; j < w; ++j) dic[j + off - w] += doc[j] * wv;
          gwk[dk] += acc;
        }
      }
    }
  }

  PredictorConfig cfg_;
  int trunk_out_h_ = 0;
  int feat_ = 0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
};

inline void adam_step(ParamVector& theta, const ParamVector& grad,
                      AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  if (theta.values.size() != grad.values.size())
    throw std::invalid_argument("parameter/gradient shape mismatch");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (state.m.empty()) {
    state.m.assign(theta.values.size(), 0.0);
    state.v.assign(theta.values.size(), 0.0);
  }
  ++state.t;
  double c1 = 1.0 - std::pow(beta1, double(state.t));
  double c2 = 1.0 - std::pow(beta2, double(state.t));
  for (size_t k = 0; k < theta.values.size(); ++k) {
    double g = grad.values[k];
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
    state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g;
    state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g;
    double mhat = state.m[k] / c1;
    double vhat = state.v[k] / c2;
    theta.values[k] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace layout360
