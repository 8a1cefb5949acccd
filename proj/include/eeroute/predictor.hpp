#pragma once

// The exit-quality predictor: a small dense network with from-scratch
// forward/backward passes, trained by mini-batch SGD under a cosine-annealed
// learning rate. Two loss modes, MSE and MAE.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eeroute/rng.hpp"
#include "eeroute/serial.hpp"

namespace eeroute {

enum class Activation : std::uint8_t { identity = 0, leaky_relu = 1 };

struct LayerSpec {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::identity;
  double leaky_slope = 0.2;
};

enum class LossMode : std::uint8_t { mse = 0, mae = 1 };

struct TrainConfig {
  LossMode loss = LossMode::mse;
  double learning_rate = 0.01;
  int epochs = 1;
  int batch_size = 32;
  double min_lr = 0.0;  // cosine schedule floor
  std::uint64_t seed = 0;
};

/// Cosine annealing: lr(t) = min_lr + (lr0 - min_lr) * (1 + cos(pi t / T)) / 2.
inline double cosine_lr(double t, double total, double lr0, double min_lr) {
  if (total <= 0.0) return lr0;
  return min_lr + (lr0 - min_lr) * (1.0 + std::cos(std::numbers::pi * t / total)) / 2.0;
}

/// Dense network. Weights are row-major out_dim x in_dim matrices. A trained
/// model is immutable and safe for concurrent forward passes.
class Mlp {
public:
  Mlp() = default;

  /// Builds the layer stack with uniform +-sqrt(6/(fan_in+fan_out)) init.
  Mlp(std::vector<LayerSpec> layers, std::uint64_t seed) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("Mlp needs at least one layer");
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      if (layers_[i].out_dim != layers_[i + 1].in_dim)
        throw std::invalid_argument("layer dims do not chain at layer " + std::to_string(i + 1));
    if (layers_.back().activation != Activation::identity)
      throw std::invalid_argument("final layer activation must be identity");
    Rng rng(derive_seed(seed, 0x6d6c70 /* "mlp" */));
    for (const auto& l : layers_) {
      const double bound = std::sqrt(6.0 / (l.in_dim + l.out_dim));
      std::vector<double> w(std::size_t(l.out_dim) * l.in_dim);
      for (auto& v : w) v = rng.uniform(-bound, bound);
      weights_.push_back(std::move(w));
      biases_.emplace_back(l.out_dim, 0.0);
    }
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_dim() const { return layers_.front().in_dim; }
  int output_dim() const { return layers_.back().out_dim; }

  std::vector<double>& weight(std::size_t layer) { return weights_[layer]; }
  std::vector<double>& bias(std::size_t layer) { return biases_[layer]; }
  const std::vector<double>& weight(std::size_t layer) const { return weights_[layer]; }
  const std::vector<double>& bias(std::size_t layer) const { return biases_[layer]; }

  std::vector<double> forward(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_dim())
      throw std::invalid_argument("input dimension mismatch");
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) a = apply_layer(li, a);
    return a;
  }

  bool operator==(const Mlp& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = other.layers_[i];
      if (a.in_dim != b.in_dim || a.out_dim != b.out_dim || a.activation != b.activation ||
          a.leaky_slope != b.leaky_slope)
        return false;
    }
    return weights_ == other.weights_ && biases_ == other.biases_;
  }

  // Activations on one layer, used by forward and backward.
  std::vector<double> apply_layer(std::size_t li, std::span<const double> in) const {
    const auto& l = layers_[li];
    std::vector<double> out(l.out_dim);
    for (int o = 0; o < l.out_dim; ++o) {
      double z = biases_[li][o];
      const double* wrow = weights_[li].data() + std::size_t(o) * l.in_dim;
      for (int i = 0; i < l.in_dim; ++i) z += wrow[i] * in[i];
      out[o] = activate(l, z);
    }
    return out;
  }

  static double activate(const LayerSpec& l, double z) {
    if (l.activation == Activation::leaky_relu && z < 0.0) return l.leaky_slope * z;
    return z;
  }

private:
  friend struct Gradients;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;
};

inline double loss_value(std::span<const double> pred, std::span<const double> target,
                         LossMode mode) {
  if (pred.size() != target.size()) throw std::invalid_argument("loss: length mismatch");
  if (pred.empty()) throw std::invalid_argument("loss: empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    acc += mode == LossMode::mse ? d * d : std::abs(d);
  }
  return acc / double(pred.size());
}

/// Per-parameter gradients, shaped like the model.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const Mlp& m) {
    Gradients g;
    for (std::size_t li = 0; li < m.layers().size(); ++li) {
      g.weights.emplace_back(m.weight(li).size(), 0.0);
      g.biases.emplace_back(m.bias(li).size(), 0.0);
    }
    return g;
  }

  void add(const Gradients& other, double scale = 1.0) {
    for (std::size_t li = 0; li < weights.size(); ++li) {
      for (std::size_t i = 0; i < weights[li].size(); ++i)
        weights[li][i] += scale * other.weights[li][i];
      for (std::size_t i = 0; i < biases[li].size(); ++i)
        biases[li][i] += scale * other.biases[li][i];
    }
  }
};

/// Exact analytic gradients of the loss for one sample. Returns the loss
/// value alongside.
inline double backward(const Mlp& m, std::span<const double> x, std::span<const double> target,
                       LossMode mode, Gradients& grads) {
  const auto& layers = m.layers();
  // Forward pass, keeping pre-activations and layer inputs.
  std::vector<std::vector<double>> inputs;   // input to each layer
  std::vector<std::vector<double>> preacts;  // z of each layer
  std::vector<double> a(x.begin(), x.end());
  if (static_cast<int>(a.size()) != m.input_dim())
    throw std::invalid_argument("backward: input dimension mismatch");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    inputs.push_back(a);
    const auto& l = layers[li];
    std::vector<double> z(l.out_dim);
    for (int o = 0; o < l.out_dim; ++o) {
      double s = m.bias(li)[o];
      const double* wrow = m.weight(li).data() + std::size_t(o) * l.in_dim;
      for (int i = 0; i < l.in_dim; ++i) s += wrow[i] * a[i];
      z[o] = s;
    }
    preacts.push_back(z);
    a.resize(l.out_dim);
    for (int o = 0; o < l.out_dim; ++o) a[o] = Mlp::activate(l, z[o]);
  }
  if (a.size() != target.size()) throw std::invalid_argument("backward: target length mismatch");
  const double loss = loss_value(a, target, mode);

  // dL/d(output).
  const double n = double(a.size());
  std::vector<double> delta(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - target[i];
    delta[i] = mode == LossMode::mse ? 2.0 * d / n : (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n;
  }

  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    // Through the activation.
    for (int o = 0; o < l.out_dim; ++o)
      if (l.activation == Activation::leaky_relu && preacts[li][o] < 0.0)
        delta[o] *= l.leaky_slope;
    // Parameter gradients and input delta.
    std::vector<double> prev_delta(l.in_dim, 0.0);
    for (int o = 0; o < l.out_dim; ++o) {
      grads.biases[li][o] += delta[o];
      double* grow = grads.weights[li].data() + std::size_t(o) * l.in_dim;
      const double* wrow = m.weight(li).data() + std::size_t(o) * l.in_dim;
      for (int i = 0; i < l.in_dim; ++i) {
        grow[i] += delta[o] * inputs[li][i];
        prev_delta[i] += delta[o] * wrow[i];
      }
    }
    delta = std::move(prev_delta);
  }
  return loss;
}

using Sample = std::pair<std::vector<double>, std::vector<double>>;  // (input, scores)

struct TrainResult {
  Mlp model;
  std::vector<double> loss_history;  // mean training loss per epoch
};

/// Mini-batch SGD with per-epoch cosine-annealed learning rate and seeded
/// shuffling. Deterministic given (model, dataset, config).
inline TrainResult train(Mlp model, const std::vector<Sample>& dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
    throw std::invalid_argument("train: bad config");
  if (cfg.min_lr > cfg.learning_rate)
    throw std::invalid_argument("train: min_lr exceeds learning_rate");
  Rng shuffle_rng(derive_seed(cfg.seed, 0x736866 /* "shf" */));
  TrainResult result{std::move(model), {}};
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.learning_rate, cfg.min_lr);
    auto order = shuffle_rng.permutation(dataset.size());
    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t batch_end = std::min(pos + std::size_t(cfg.batch_size), order.size());
      Gradients grads = Gradients::zeros_like(result.model);
      for (std::size_t b = pos; b < batch_end; ++b) {
        const auto& [x, y] = dataset[order[b]];
        epoch_loss += backward(result.model, x, y, cfg.loss, grads);
      }
      const double scale = -lr / double(batch_end - pos);
      for (std::size_t li = 0; li < result.model.layers().size(); ++li) {
        auto& w = result.model.weight(li);
        auto& bvec = result.model.bias(li);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * grads.weights[li][i];
        for (std::size_t i = 0; i < bvec.size(); ++i) bvec[i] += scale * grads.biases[li][i];
      }
      pos = batch_end;
    }
    epoch_loss /= double(dataset.size());
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
    result.loss_history.push_back(epoch_loss);
  }
  return result;
}

struct EvalReport {
  std::vector<double> per_exit_error;  // mean relative error per exit
  double mean_error = 0.0;
};

/// Per-exit mean relative error |pred - true| / max(true, 1e-6).
inline EvalReport evaluate(const Mlp& m, const std::vector<Sample>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  constexpr double eps_floor = 1e-6;
  const std::size_t exits = dataset.front().second.size();
  EvalReport rep;
  rep.per_exit_error.assign(exits, 0.0);
  for (const auto& [x, y] : dataset) {
    auto pred = m.forward(x);
    for (std::size_t e = 0; e < exits; ++e)
      rep.per_exit_error[e] += std::abs(pred[e] - y[e]) / std::max(y[e], eps_floor);
  }
  for (auto& v : rep.per_exit_error) {
    v /= double(dataset.size());
    rep.mean_error += v;
  }
  rep.mean_error /= double(exits);
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "FNCMLP1" | layer_count u32 | per layer in u32,
// out u32, activation u8, leaky slope f32 | per layer W f32s (row-major),
// b f32s | crc32 over everything after the magic.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMlpMagic = "FNCMLP1";

inline std::vector<std::uint8_t> save(const Mlp& m) {
  ByteWriter payload;
  payload.put_u32(static_cast<std::uint32_t>(m.layers().size()));
  for (const auto& l : m.layers()) {
    payload.put_u32(static_cast<std::uint32_t>(l.in_dim));
    payload.put_u32(static_cast<std::uint32_t>(l.out_dim));
    payload.put_u8(static_cast<std::uint8_t>(l.activation));
    payload.put_f32(static_cast<float>(l.leaky_slope));
  }
  for (std::size_t li = 0; li < m.layers().size(); ++li) {
    for (double v : m.weight(li)) payload.put_f32(static_cast<float>(v));
    for (double v : m.bias(li)) payload.put_f32(static_cast<float>(v));
  }
  ByteWriter out;
  out.put_magic(kMlpMagic);
  out.put_bytes(payload.bytes());
  out.put_u32(crc32(payload.bytes()));
  return out.take();
}

inline Mlp load_mlp(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMlpMagic);
  if (bytes.size() < kMlpMagic.size() + 4)
    throw format_error("stream too short for checksum", bytes.size());
  auto payload = bytes.subspan(kMlpMagic.size(), bytes.size() - kMlpMagic.size() - 4);
  ByteReader tail(bytes.subspan(bytes.size() - 4));
  if (crc32(payload) != tail.get_u32())
    throw format_error("checksum mismatch", bytes.size() - 4);

  const std::uint32_t layer_count = r.get_u32();
  if (layer_count == 0 || layer_count > 1u << 16)
    throw format_error("bad layer count", r.pos());
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec l;
    l.in_dim = static_cast<int>(r.get_u32());
    l.out_dim = static_cast<int>(r.get_u32());
    const std::uint8_t act = r.get_u8();
    if (act > 1) throw format_error("bad activation tag", r.pos());
    l.activation = static_cast<Activation>(act);
    l.leaky_slope = r.get_f32();
    if (l.in_dim < 1 || l.out_dim < 1) throw format_error("bad layer dims", r.pos());
    specs.push_back(l);
  }
  Mlp m(specs, 0);
  for (std::uint32_t li = 0; li < layer_count; ++li) {
    for (double& v : m.weight(li)) v = r.get_f32();
    for (double& v : m.bias(li)) v = r.get_f32();
  }
  if (r.remaining() != 4) throw format_error("trailing bytes after parameters", r.pos());
  return m;
}

}  // namespace eeroute
