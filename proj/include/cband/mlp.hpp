#pragma once

// Trainable MLP regression head: feature vector -> frame quality score.
// Three hidden-to-output layers with dims [D, max(D/4,8), max(D/16,8), 1],
// ReLU hidden activations, inverted dropout 0.2 during training, L1 loss
// under Adam. Weights are stored float32 and re-quantized after every
// optimizer step; all arithmetic runs in float64, which makes training
// bit-reproducible and the on-disk round trip exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cband/detail/io.hpp"
#include "cband/errors.hpp"
#include "cband/features.hpp"
#include "cband/rng.hpp"

namespace cband {

struct TrainConfig {
  double lr = 1e-4;
  uint32_t batch_size = 32;
  uint32_t epochs = 100;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainMeta {
  uint32_t epochs_run = 0;
  uint32_t batch_size = 0;
  double lr = 0.0;
  double final_loss = 0.0;
};

struct MLPModel {
  std::vector<uint32_t> layer_dims;          // [D_in, H1, H2, 1]
  std::vector<std::vector<float>> weights;   // per layer, row-major out×in
  std::vector<std::vector<float>> biases;    // per layer, length out
  double dropout_rate = 0.2;
  uint64_t rng_seed = 0;
  FeatureMode feature_mode = FeatureMode::GGD;
  std::string backbone_name;
  TrainMeta train_meta;

  size_t n_layers() const { return weights.size(); }
  uint32_t input_dim() const { return layer_dims.empty() ? 0 : layer_dims.front(); }
};

struct LabeledFeatureRow {
  int64_t content_id = 0;
  int64_t frame_index = 0;
  std::vector<double> features;
  double target = 0.0;
};

inline MLPModel mlp_init(uint32_t input_dim, uint64_t seed) {
  if (input_dim == 0)
    throw Error(ErrorKind::InvalidArgument, "mlp_init: input_dim must be positive");
  MLPModel m;
  m.layer_dims = {input_dim, std::max(input_dim / 4, 8u), std::max(input_dim / 16, 8u), 1u};
  m.rng_seed = seed;
  Rng rng(seed);
  for (size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    const uint32_t fan_in = m.layer_dims[l];
    const uint32_t fan_out = m.layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / double(fan_in));
    std::vector<float> w(size_t(fan_out) * fan_in);
    for (float& v : w) v = float(rng.uniform(-limit, limit));
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::vector<float>(fan_out, 0.0f));
  }
  return m;
}

namespace detail {

struct ForwardTrace {
  // Per layer: pre-activations z_l and post-activation/post-dropout a_l.
  std::vector<std::vector<double>> z;
  std::vector<std::vector<double>> a;  // a[0] is the input copy
  std::vector<std::vector<double>> mask;  // dropout multipliers per hidden layer
  double output = 0.0;
};

inline void check_model_input(const MLPModel& m, size_t dim) {
  if (m.layer_dims.size() < 2 || m.weights.size() != m.layer_dims.size() - 1)
    throw Error(ErrorKind::ShapeError, "mlp: model layers are inconsistent");
  if (dim != m.input_dim())
    throw Error(ErrorKind::ShapeError,
                "mlp: feature dimension " + std::to_string(dim) +
                    " does not match model input " + std::to_string(m.input_dim()));
}

inline ForwardTrace mlp_forward_trace(const MLPModel& m, const double* v, size_t dim,
                                      bool training, Rng* rng) {
  check_model_input(m, dim);
  const size_t L = m.n_layers();
  ForwardTrace t;
  t.z.resize(L);
  t.a.resize(L + 1);
  t.mask.resize(L);
  t.a[0].assign(v, v + dim);
  for (size_t l = 0; l < L; ++l) {
    const uint32_t n_out = m.layer_dims[l + 1];
    const uint32_t n_in = m.layer_dims[l];
    const std::vector<double>& in = t.a[l];
    std::vector<double>& z = t.z[l];
    z.assign(n_out, 0.0);
    const float* w = m.weights[l].data();
    for (uint32_t o = 0; o < n_out; ++o) {
      double acc = double(m.biases[l][o]);
      const float* row = w + size_t(o) * n_in;
      for (uint32_t i = 0; i < n_in; ++i) acc += double(row[i]) * in[i];
      z[o] = acc;
    }
    const bool hidden = l + 1 < L;
    std::vector<double>& a = t.a[l + 1];
    a.resize(n_out);
    if (hidden) {
      std::vector<double>& mask = t.mask[l];
      mask.assign(n_out, 1.0);
      if (training && m.dropout_rate > 0.0) {
        if (rng == nullptr)
          throw Error(ErrorKind::InvalidArgument,
                      "mlp: training-mode forward requires an rng for dropout");
        const double keep = 1.0 - m.dropout_rate;
        for (uint32_t o = 0; o < n_out; ++o)
          mask[o] = rng->uniform() < m.dropout_rate ? 0.0 : 1.0 / keep;
      }
      for (uint32_t o = 0; o < n_out; ++o)
        a[o] = std::max(z[o], 0.0) * mask[o];
    } else {
      for (uint32_t o = 0; o < n_out; ++o) a[o] = z[o];
    }
  }
  t.output = t.a.back()[0];
  return t;
}

// One Adam update on a single parameter; `step` counts from 1. Shared by
// the training loop and the unit-test trace oracle.
inline double adam_update(double param, double& m1, double& m2, double grad,
                          uint64_t step, const TrainConfig& cfg) {
  m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
  m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad * grad;
  const double m1_hat = m1 / (1.0 - std::pow(cfg.beta1, double(step)));
  const double m2_hat = m2 / (1.0 - std::pow(cfg.beta2, double(step)));
  return param - cfg.lr * m1_hat / (std::sqrt(m2_hat) + cfg.epsilon);
}

}  // namespace detail

inline double mlp_forward(const MLPModel& m, const double* v, size_t dim,
                          bool training = false, Rng* rng = nullptr) {
  return detail::mlp_forward_trace(m, v, dim, training, rng).output;
}

inline double mlp_forward(const MLPModel& m, const std::vector<double>& v,
                          bool training = false, Rng* rng = nullptr) {
  return mlp_forward(m, v.data(), v.size(), training, rng);
}

namespace detail {

struct Gradients {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;

  explicit Gradients(const MLPModel& m) {
    for (size_t l = 0; l < m.n_layers(); ++l) {
      w.emplace_back(m.weights[l].size(), 0.0);
      b.emplace_back(m.biases[l].size(), 0.0);
    }
  }
  void zero() {
    for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
  }
};

// Backward pass for L1 loss on one sample; accumulates dLoss/dparam scaled
// by `weight` (1/batch for the batch mean). Returns |pred - target|.
inline double mlp_backward_l1(const MLPModel& m, const ForwardTrace& t,
                              double target, double weight, Gradients& g) {
  const size_t L = m.n_layers();
  const double residual = t.output - target;
  // Subgradient of |x| at 0 is taken as 0.
  double delta_out = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
  delta_out *= weight;

  std::vector<double> delta(1, delta_out);
  for (size_t l = L; l-- > 0;) {
    const uint32_t n_out = m.layer_dims[l + 1];
    const uint32_t n_in = m.layer_dims[l];
    const std::vector<double>& in = t.a[l];
    for (uint32_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      g.b[l][o] += d;
      double* grow = g.w[l].data() + size_t(o) * n_in;
      for (uint32_t i = 0; i < n_in; ++i) grow[i] += d * in[i];
    }
    if (l == 0) break;
    std::vector<double> prev(n_in, 0.0);
    const float* w = m.weights[l].data();
    for (uint32_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const float* row = w + size_t(o) * n_in;
      for (uint32_t i = 0; i < n_in; ++i) prev[i] += d * double(row[i]);
    }
    // Through dropout and ReLU of layer l-1 (hidden layers only).
    for (uint32_t i = 0; i < n_in; ++i) {
      const double relu_grad = t.z[l - 1][i] > 0.0 ? 1.0 : 0.0;
      prev[i] *= relu_grad * t.mask[l - 1][i];
    }
    delta = std::move(prev);
  }
  return std::abs(residual);
}

}  // namespace detail

inline MLPModel train(MLPModel model, const std::vector<LabeledFeatureRow>& data,
                      const TrainConfig& cfg,
                      std::vector<double>* epoch_losses = nullptr) {
  if (data.empty())
    throw Error(ErrorKind::EmptyInput, "train: labeled feature set is empty");
  if (cfg.batch_size < 1 || cfg.epochs < 1 || cfg.lr < 0.0)
    throw Error(ErrorKind::InvalidArgument, "train: invalid configuration");
  for (const auto& row : data)
    detail::check_model_input(model, row.features.size());

  const size_t n = data.size();
  detail::Gradients grads(model);
  std::vector<std::vector<double>> adam_m1_w, adam_m2_w, adam_m1_b, adam_m2_b;
  for (size_t l = 0; l < model.n_layers(); ++l) {
    adam_m1_w.emplace_back(model.weights[l].size(), 0.0);
    adam_m2_w.emplace_back(model.weights[l].size(), 0.0);
    adam_m1_b.emplace_back(model.biases[l].size(), 0.0);
    adam_m2_b.emplace_back(model.biases[l].size(), 0.0);
  }

  Rng dropout_rng(derive_seed(cfg.seed, 0xd70));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  uint64_t step = 0;
  double last_loss = 0.0;

  if (epoch_losses) {
    epoch_losses->clear();
    epoch_losses->reserve(cfg.epochs);
  }
  for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, epoch));
    std::iota(order.begin(), order.end(), size_t(0));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t stop = std::min(n, start + cfg.batch_size);
      const double inv_batch = 1.0 / double(stop - start);
      grads.zero();
      double loss = 0.0;
      for (size_t k = start; k < stop; ++k) {
        const LabeledFeatureRow& row = data[order[k]];
        detail::ForwardTrace t = detail::mlp_forward_trace(
            model, row.features.data(), row.features.size(), true, &dropout_rng);
        loss += detail::mlp_backward_l1(model, t, row.target, inv_batch, grads);
      }
      epoch_loss_sum += loss;  // per-sample losses, before batch averaging
      loss *= inv_batch;
      ++step;
      if (!std::isfinite(loss))
        throw Error(ErrorKind::DivergenceError,
                    "train: loss diverged at step " + std::to_string(step));
      last_loss = loss;

      for (size_t l = 0; l < model.n_layers(); ++l) {
        for (size_t i = 0; i < model.weights[l].size(); ++i)
          model.weights[l][i] = float(detail::adam_update(
              double(model.weights[l][i]), adam_m1_w[l][i], adam_m2_w[l][i],
              grads.w[l][i], step, cfg));
        for (size_t i = 0; i < model.biases[l].size(); ++i)
          model.biases[l][i] = float(detail::adam_update(
              double(model.biases[l][i]), adam_m1_b[l][i], adam_m2_b[l][i],
              grads.b[l][i], step, cfg));
      }
    }
    if (epoch_losses) epoch_losses->push_back(epoch_loss_sum / double(n));
  }

  model.train_meta.epochs_run = cfg.epochs;
  model.train_meta.batch_size = cfg.batch_size;
  model.train_meta.lr = cfg.lr;
  model.train_meta.final_loss = last_loss;
  return model;
}

inline double video_score(const std::vector<double>& frame_scores) {
  if (frame_scores.empty())
    throw Error(ErrorKind::EmptyInput, "video_score: no frame scores");
  double sum = 0.0;
  for (double s : frame_scores) sum += s;
  return sum / double(frame_scores.size());
}

// --- model file format (little-endian) --------------------------------------
//   magic "CBMH", version u16
//   D_in u32, n_layers u8, layer_dims (n_layers+1)×u32
//   feature_mode u8, backbone_name str16
//   rng_seed u64, dropout_rate f64
//   train_meta: epochs_run u32, batch_size u32, lr f64, final_loss f64
//   per layer: weights (out×in f32 row-major), biases (out f32)

inline constexpr uint16_t kModelFileVersion = 1;

inline void save_model(const MLPModel& m, const std::string& path) {
  detail::ByteWriter w;
  w.raw("CBMH", 4);
  w.u16(kModelFileVersion);
  w.u32(m.input_dim());
  w.u8(uint8_t(m.n_layers()));
  for (uint32_t d : m.layer_dims) w.u32(d);
  w.u8(uint8_t(m.feature_mode));
  w.str16(m.backbone_name);
  w.u64(m.rng_seed);
  w.f64(m.dropout_rate);
  w.u32(m.train_meta.epochs_run);
  w.u32(m.train_meta.batch_size);
  w.f64(m.train_meta.lr);
  w.f64(m.train_meta.final_loss);
  for (size_t l = 0; l < m.n_layers(); ++l) {
    for (float v : m.weights[l]) w.f32(v);
    for (float v : m.biases[l]) w.f32(v);
  }
  w.save(path);
}

inline MLPModel load_model(const std::string& path) {
  const std::vector<uint8_t> bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, ErrorKind::ModelFormatError);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "CBMH")
    throw Error(ErrorKind::ModelFormatError, "model file magic mismatch");
  if (r.u16() != kModelFileVersion)
    throw Error(ErrorKind::ModelFormatError, "unsupported model file version");

  MLPModel m;
  const uint32_t d_in = r.u32();
  const uint8_t n_layers = r.u8();
  if (n_layers < 1 || n_layers > 16)
    throw Error(ErrorKind::ModelFormatError, "implausible layer count");
  m.layer_dims.resize(size_t(n_layers) + 1);
  for (uint32_t& d : m.layer_dims) d = r.u32();
  if (m.layer_dims.front() != d_in || m.layer_dims.back() != 1)
    throw Error(ErrorKind::ModelFormatError, "layer dimensions disagree with header");
  for (uint32_t d : m.layer_dims)
    if (d == 0) throw Error(ErrorKind::ModelFormatError, "zero layer width");

  const uint8_t mode = r.u8();
  if (mode > uint8_t(FeatureMode::SigmaOnly))
    throw Error(ErrorKind::ModelFormatError, "unknown feature mode");
  m.feature_mode = FeatureMode(mode);
  m.backbone_name = r.str16();
  m.rng_seed = r.u64();
  m.dropout_rate = r.f64();
  m.train_meta.epochs_run = r.u32();
  m.train_meta.batch_size = r.u32();
  m.train_meta.lr = r.f64();
  m.train_meta.final_loss = r.f64();

  for (size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    const size_t n_w = size_t(m.layer_dims[l + 1]) * m.layer_dims[l];
    std::vector<float> w(n_w);
    for (float& v : w) v = r.f32();
    std::vector<float> b(m.layer_dims[l + 1]);
    for (float& v : b) v = r.f32();
    for (float v : w)
      if (!std::isfinite(v))
        throw Error(ErrorKind::ModelFormatError, "non-finite weight in model file");
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  if (r.remaining() != 0)
    throw Error(ErrorKind::ModelFormatError, "trailing bytes in model file");
  return m;
}

}  // namespace cband
