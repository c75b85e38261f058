#pragma once

// Minimal dense/attention network kernel with hand-written backward passes.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tgrasp/errors.hpp"
#include "tgrasp/matrix.hpp"
#include "tgrasp/rng.hpp"

namespace tgrasp::nn {

inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    auto o = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (auto& v : o) v /= sum;
  }
  return out;
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Matrix init_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Matrix w(fan_in, fan_out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

// ---------------------------------------------------------------------------
// Single-head scaled dot-product self-attention.

struct AttentionParams {
  Matrix w_q;  // d_model x d_k
  Matrix w_k;
  Matrix w_v;

  std::size_t d_model() const noexcept { return w_q.rows(); }
  std::size_t d_k() const noexcept { return w_q.cols(); }

  void validate() const {
    if (w_q.cols() < 1) throw DimensionError("attention d_k must be >= 1");
    if (!w_q.same_shape(w_k) || !w_q.same_shape(w_v)) {
      throw DimensionError("attention weights disagree: W_Q " + w_q.shape_string() + ", W_K " + w_k.shape_string() +
                           ", W_V " + w_v.shape_string());
    }
  }

  static AttentionParams random(std::size_t d_model, std::size_t d_k, Rng& rng) {
    return {init_uniform(d_model, d_k, rng), init_uniform(d_model, d_k, rng), init_uniform(d_model, d_k, rng)};
  }
};

struct AttentionGrads {
  Matrix d_x;
  Matrix d_w_q;
  Matrix d_w_k;
  Matrix d_w_v;
};

struct AttentionCache {
  Matrix x;
  Matrix q;
  Matrix k;
  Matrix v;
  Matrix weights;  // softmax(QK^T / sqrt(d_k)), T x T
  const AttentionParams* params = nullptr;  // must outlive the cache
  bool valid = false;
};

struct AttentionOutput {
  Matrix y;
  AttentionCache cache;
};

inline AttentionOutput attention_forward(const Matrix& x, const AttentionParams& p) {
  p.validate();
  if (x.cols() != p.d_model()) {
    throw DimensionError("attention input X is " + x.shape_string() + " but W_Q expects d_model=" +
                         std::to_string(p.d_model()));
  }
  AttentionOutput out;
  auto& c = out.cache;
  c.x = x;
  c.q = matmul(x, p.w_q, "X", "W_Q");
  c.k = matmul(x, p.w_k, "X", "W_K");
  c.v = matmul(x, p.w_v, "X", "W_V");
  Matrix scores = matmul_nt(c.q, c.k, "Q", "K");
  scores *= 1.0 / std::sqrt(static_cast<double>(p.d_k()));
  c.weights = softmax_rows(scores);
  out.y = matmul(c.weights, c.v, "A", "V");
  c.params = &p;
  c.valid = true;
  return out;
}

inline AttentionGrads attention_backward(const Matrix& d_y, const AttentionCache& c) {
  if (!c.valid || c.params == nullptr) throw ContractError("attention_backward called without a forward cache");
  if (d_y.rows() != c.v.rows() || d_y.cols() != c.v.cols()) {
    throw ContractError("attention_backward: dY is " + d_y.shape_string() + " but cached output is " +
                        c.v.shape_string());
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.params->d_k()));
  AttentionGrads g;
  const Matrix d_v = matmul_tn(c.weights, d_y);
  const Matrix d_a = matmul_nt(d_y, c.v);
  // Softmax Jacobian row by row: dS_ij = A_ij (dA_ij - sum_k A_ik dA_ik).
  Matrix d_s(d_a.rows(), d_a.cols());
  for (std::size_t i = 0; i < d_a.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d_a.cols(); ++j) dot += c.weights(i, j) * d_a(i, j);
    for (std::size_t j = 0; j < d_a.cols(); ++j) d_s(i, j) = c.weights(i, j) * (d_a(i, j) - dot) * scale;
  }
  const Matrix d_q = matmul(d_s, c.k);
  const Matrix d_k = matmul_tn(d_s, c.q);
  g.d_w_q = matmul_tn(c.x, d_q);
  g.d_w_k = matmul_tn(c.x, d_k);
  g.d_w_v = matmul_tn(c.x, d_v);
  g.d_x = matmul_nt(d_q, c.params->w_q);
  g.d_x += matmul_nt(d_k, c.params->w_k);
  g.d_x += matmul_nt(d_v, c.params->w_v);
  return g;
}

// ---------------------------------------------------------------------------
// Multilayer perceptron.

enum class Activation { identity, relu };

struct DenseLayer {
  Matrix w;  // in x out
  Matrix b;  // 1 x out
  Activation activation = Activation::identity;

  static DenseLayer random(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    DenseLayer l;
    l.w = init_uniform(in, out, rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    l.b = Matrix(1, out);
    for (auto& v : l.b.data()) v = rng.uniform(-bound, bound);
    l.activation = act;
    return l;
  }
};

struct MlpCache {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> pre_activation;
  bool valid = false;
};

struct MlpOutput {
  Matrix y;
  MlpCache cache;
};

struct MlpGrads {
  std::vector<Matrix> d_w;
  std::vector<Matrix> d_b;
  Matrix d_x;
};

inline MlpOutput mlp_forward(const Matrix& x, std::span<const DenseLayer> layers) {
  MlpOutput out;
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (h.cols() != layer.w.rows()) {
      throw DimensionError("layer " + std::to_string(l) + " expects " + std::to_string(layer.w.rows()) +
                           " inputs, got " + h.shape_string());
    }
    if (layer.b.rows() != 1 || layer.b.cols() != layer.w.cols()) {
      throw DimensionError("layer " + std::to_string(l) + " bias is " + layer.b.shape_string());
    }
    out.cache.inputs.push_back(h);
    Matrix z = matmul(h, layer.w);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto zr = z.row(r);
      for (std::size_t c = 0; c < zr.size(); ++c) zr[c] += layer.b(0, c);
    }
    out.cache.pre_activation.push_back(z);
    if (layer.activation == Activation::relu) {
      for (auto& v : z.data()) v = v > 0.0 ? v : 0.0;
    }
    h = std::move(z);
  }
  out.y = std::move(h);
  out.cache.valid = true;
  return out;
}

inline MlpGrads mlp_backward(const Matrix& d_y, const MlpCache& cache, std::span<const DenseLayer> layers) {
  if (!cache.valid || cache.inputs.size() != layers.size()) {
    throw ContractError("mlp_backward cache does not match the layer stack");
  }
  MlpGrads g;
  g.d_w.resize(layers.size());
  g.d_b.resize(layers.size());
  Matrix delta = d_y;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const auto& z = cache.pre_activation[li];
    if (!delta.same_shape(z)) throw ContractError("mlp_backward gradient shape " + delta.shape_string() + " vs " + z.shape_string());
    if (layer.activation == Activation::relu) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!(z.data()[i] > 0.0)) delta.data()[i] = 0.0;
      }
    }
    g.d_w[li] = matmul_tn(cache.inputs[li], delta);
    Matrix db(1, delta.cols());
    for (std::size_t r = 0; r < delta.rows(); ++r)
      for (std::size_t c = 0; c < delta.cols(); ++c) db(0, c) += delta(r, c);
    g.d_b[li] = std::move(db);
    delta = matmul_nt(delta, layer.w);
  }
  g.d_x = std::move(delta);
  return g;
}

// ---------------------------------------------------------------------------
// Loss and optimizers.

struct LossResult {
  double loss = 0.0;
  std::vector<double> d_pred;
};

// L = 1/(2N) sum (pred - target)^2, dL/dpred_i = (pred_i - target_i) / N.
inline LossResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty()) throw ContractError("mse_loss on empty input");
  if (pred.size() != target.size()) {
    throw DimensionError("mse_loss length mismatch: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
  }
  const double n = static_cast<double>(pred.size());
  LossResult r;
  r.d_pred.resize(pred.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    s += e * e;
    r.d_pred[i] = e / n;
  }
  r.loss = s / (2.0 * n);
  return r;
}

inline void check_step_inputs(std::span<Matrix* const> params, std::span<const Matrix> grads, double lr,
                              std::int64_t step_index) {
  if (!(lr > 0.0)) throw ContractError("learning rate must be > 0");
  if (params.size() != grads.size()) throw DimensionError("parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw DimensionError("gradient " + std::to_string(i) + " is " + grads[i].shape_string() + ", parameter is " +
                           params[i]->shape_string());
    }
    if (!grads[i].all_finite()) throw TrainingError("non-finite gradient", step_index);
  }
}

// w <- w - lr * g
inline void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads, double lr,
                     std::int64_t step_index = 0) {
  check_step_inputs(params, grads, lr, step_index);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->data();
    const auto& g = grads[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
  }
}

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(std::span<Matrix* const> params) {
    AdamState s;
    for (const Matrix* p : params) {
      s.m.emplace_back(p->rows(), p->cols());
      s.v.emplace_back(p->rows(), p->cols());
    }
    return s;
  }
};

inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr) {
  check_step_inputs(params, grads, lr, state.t);
  if (state.m.size() != params.size()) throw DimensionError("Adam state does not match parameter list");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->data();
    const auto& g = grads[i].data();
    auto& m = state.m[i].data();
    auto& v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace tgrasp::nn
