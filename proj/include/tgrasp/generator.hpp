#pragma once

// Behavior-cloned initial grasp policy: (S, theta) -> target angle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tgrasp/archive.hpp"
#include "tgrasp/errors.hpp"
#include "tgrasp/matrix.hpp"
#include "tgrasp/nn.hpp"
#include "tgrasp/rng.hpp"
#include "tgrasp/sim.hpp"
#include "tgrasp/split.hpp"
#include "tgrasp/tactile.hpp"

namespace tgrasp {

struct GraspSample {
  TaxelArray S{};
  double theta_deg = 0.0;
  double a_deg = 0.0;

  void validate() const {
    if (!(a_deg >= sim::kThetaMin && a_deg <= sim::kThetaMax)) throw ValidationError("a_deg", "must lie in [0, 90]");
    if (!std::isfinite(theta_deg)) throw ValidationError("theta_deg", "must be finite");
    for (double v : S)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("S", "entries must be finite and >= 0");
  }

  bool operator==(const GraspSample&) const = default;
  auto operator<=>(const GraspSample&) const = default;
};

struct GeneratorConfig {
  double lr = 0.001;
  std::size_t batch = 64;
  std::size_t epochs = 50;
  std::size_t hidden = 64;
  std::uint64_t seed = 1;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // 1/(2N) sum of squared errors over the full split
  double val_loss = 0.0;

  double train_mse() const { return 2.0 * train_loss; }
  double val_mse() const { return 2.0 * val_loss; }
};

// Per-feature affine standardization fitted on training inputs.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean.assign(x.cols(), 0.0);
    s.scale.assign(x.cols(), 1.0);
    if (x.rows() == 0) return s;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) m += x(r, c);
      m /= static_cast<double>(x.rows());
      double v = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, c) - m) * (x(r, c) - m);
      v /= static_cast<double>(x.rows());
      s.mean[c] = m;
      s.scale[c] = v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0;
    }
    return s;
  }

  void apply(Matrix& x) const {
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = (x(r, c) - mean[c]) * scale[c];
  }
};

class GeneratorModel {
 public:
  static constexpr std::size_t kInputDim = tactile::kTaxels + 1;

  GeneratorModel() = default;

  static GeneratorModel initialized(const GeneratorConfig& cfg, Rng& rng) {
    GeneratorModel m;
    m.config_ = cfg;
    m.layers_.push_back(nn::DenseLayer::random(kInputDim, cfg.hidden, nn::Activation::relu, rng));
    m.layers_.push_back(nn::DenseLayer::random(cfg.hidden, cfg.hidden, nn::Activation::relu, rng));
    m.layers_.push_back(nn::DenseLayer::random(cfg.hidden, 1, nn::Activation::identity, rng));
    m.norm_.mean.assign(kInputDim, 0.0);
    m.norm_.scale.assign(kInputDim, 1.0);
    m.trained_ = true;
    return m;
  }

  bool trained() const noexcept { return trained_; }
  const GeneratorConfig& config() const noexcept { return config_; }
  std::vector<nn::DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<nn::DenseLayer>& layers() const noexcept { return layers_; }
  Standardizer& normalizer() noexcept { return norm_; }
  const Standardizer& normalizer() const noexcept { return norm_; }

  static Matrix raw_features(const TaxelArray& S, double theta_deg) {
    Matrix x(1, kInputDim);
    for (std::size_t i = 0; i < S.size(); ++i) x(0, i) = S[i];
    x(0, tactile::kTaxels) = theta_deg;
    return x;
  }

  // Unclamped network output for a batch of raw feature rows.
  Matrix forward_raw(Matrix x) const {
    norm_.apply(x);
    return nn::mlp_forward(x, layers_).y;
  }

  ModelArchive to_archive() const {
    require_trained();
    ModelArchive a("generator");
    a.set_attr("topology", "mlp:33-" + std::to_string(config_.hidden) + "relu-" + std::to_string(config_.hidden) +
                               "relu-1");
    a.set_attr("hidden", static_cast<std::int64_t>(config_.hidden));
    a.set_attr("epochs", static_cast<std::int64_t>(config_.epochs));
    a.set_attr("batch", static_cast<std::int64_t>(config_.batch));
    a.set_attr("seed", static_cast<std::int64_t>(config_.seed));
    a.add("norm.mean", norm_.mean);
    a.add("norm.scale", norm_.scale);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      a.add("layer" + std::to_string(l) + ".w", layers_[l].w);
      a.add("layer" + std::to_string(l) + ".b", layers_[l].b);
    }
    return a;
  }

  static GeneratorModel from_archive(const ModelArchive& a) {
    if (a.kind() != "generator") throw ModelError("expected a generator model, found '" + a.kind() + "'");
    GeneratorModel m;
    m.config_.hidden = static_cast<std::size_t>(a.attr_int("hidden"));
    m.config_.epochs = static_cast<std::size_t>(a.attr_int("epochs"));
    m.config_.batch = static_cast<std::size_t>(a.attr_int("batch"));
    m.config_.seed = static_cast<std::uint64_t>(a.attr_int("seed"));
    m.norm_.mean = a.vector("norm.mean");
    m.norm_.scale = a.vector("norm.scale");
    if (m.norm_.mean.size() != kInputDim || m.norm_.scale.size() != kInputDim) {
      throw ModelError("generator normalizer has wrong dimension");
    }
    const std::size_t h = m.config_.hidden;
    const std::size_t dims[4] = {kInputDim, h, h, 1};
    for (std::size_t l = 0; l < 3; ++l) {
      nn::DenseLayer layer;
      layer.w = a.matrix("layer" + std::to_string(l) + ".w", dims[l], dims[l + 1]);
      layer.b = a.matrix("layer" + std::to_string(l) + ".b", 1, dims[l + 1]);
      layer.activation = l < 2 ? nn::Activation::relu : nn::Activation::identity;
      if (!layer.w.all_finite() || !layer.b.all_finite()) throw ModelError("generator weights are not finite");
      m.layers_.push_back(std::move(layer));
    }
    m.trained_ = true;
    return m;
  }

  void save(const std::string& path) const { to_archive().save(path); }
  static GeneratorModel load(const std::string& path) { return from_archive(ModelArchive::load(path)); }

  void require_trained() const {
    if (!trained_ || layers_.size() != 3) throw ModelError("generator model is untrained");
  }

 private:
  GeneratorConfig config_;
  Standardizer norm_;
  std::vector<nn::DenseLayer> layers_;
  bool trained_ = false;
};

inline double predict_initial_grasp(const GeneratorModel& model, const TaxelArray& S, double theta_deg) {
  model.require_trained();
  const Matrix y = model.forward_raw(GeneratorModel::raw_features(S, theta_deg));
  const double a = y(0, 0);
  if (!std::isfinite(a)) throw ModelError("generator produced a non-finite angle");
  return std::clamp(a, sim::kThetaMin, sim::kThetaMax);
}

struct GeneratorTraining {
  GeneratorModel model;
  std::vector<EpochLoss> history;
  double val_label_variance = 0.0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

namespace detail {

inline void pack_samples(const std::vector<GraspSample>& samples, Matrix& x, std::vector<double>& y) {
  x = Matrix(samples.size(), GeneratorModel::kInputDim);
  y.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < tactile::kTaxels; ++j) x(i, j) = samples[i].S[j];
    x(i, tactile::kTaxels) = samples[i].theta_deg;
    y[i] = samples[i].a_deg;
  }
}

inline double full_loss(const GeneratorModel& model, const Matrix& x, const std::vector<double>& y) {
  if (y.empty()) return 0.0;
  const Matrix pred = model.forward_raw(x);
  return nn::mse_loss(pred.data(), y).loss;
}

inline double variance(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Fits the generator by minibatch SGD on the half-MSE loss.
///
/// Samples are put in a canonical order before the seeded shuffle, so the
/// result does not depend on the order in which they were supplied. Inputs
/// are standardized with training-split statistics; the output layer starts
/// with zero weights and its bias at the mean training label.
inline GeneratorTraining train_generator(std::vector<GraspSample> data, const GeneratorConfig& cfg = {}) {
  if (data.size() < 10) {
    throw DataError("train_generator needs at least 10 samples, got " + std::to_string(data.size()));
  }
  if (cfg.batch == 0 || cfg.epochs == 0) throw ContractError("batch and epochs must be positive");
  for (const auto& s : data) s.validate();
  std::sort(data.begin(), data.end());

  const auto split = split_dataset(data, cfg.seed, 10);
  GeneratorTraining out;
  out.n_train = split.train.size();
  out.n_val = split.val.size();

  Matrix x_train, x_val;
  std::vector<double> y_train, y_val;
  detail::pack_samples(split.train, x_train, y_train);
  detail::pack_samples(split.val, x_val, y_val);
  out.val_label_variance = detail::variance(y_val);

  Rng rng(splitmix64(cfg.seed ^ 0x47454eULL));
  GeneratorModel model = GeneratorModel::initialized(cfg, rng);
  model.normalizer() = Standardizer::fit(x_train);
  model.layers().back().w.fill(0.0);
  model.layers().back().b(0, 0) =
      std::accumulate(y_train.begin(), y_train.end(), 0.0) / static_cast<double>(y_train.size());

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix*> params;
  for (auto& l : model.layers()) {
    params.push_back(&l.w);
    params.push_back(&l.b);
  }

  Matrix x_norm = x_train;
  model.normalizer().apply(x_norm);
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - start);
      Matrix xb(n, GeneratorModel::kInputDim);
      std::vector<double> yb(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto src = x_norm.row(order[start + i]);
        std::copy(src.begin(), src.end(), xb.row(i).begin());
        yb[i] = y_train[order[start + i]];
      }
      const auto fwd = nn::mlp_forward(xb, model.layers());
      const auto loss = nn::mse_loss(fwd.y.data(), yb);
      if (!std::isfinite(loss.loss)) throw TrainingError("non-finite generator loss", static_cast<std::int64_t>(epoch));
      const auto grads = nn::mlp_backward(Matrix(n, 1, loss.d_pred), fwd.cache, model.layers());
      std::vector<Matrix> flat;
      for (std::size_t l = 0; l < grads.d_w.size(); ++l) {
        flat.push_back(grads.d_w[l]);
        flat.push_back(grads.d_b[l]);
      }
      nn::sgd_step(params, flat, cfg.lr, step++);
    }
    EpochLoss e{epoch, detail::full_loss(model, x_train, y_train), detail::full_loss(model, x_val, y_val)};
    if (!std::isfinite(e.train_loss) || !std::isfinite(e.val_loss)) {
      throw TrainingError("non-finite generator loss", static_cast<std::int64_t>(epoch));
    }
    out.history.push_back(e);
  }
  out.model = std::move(model);
  return out;
}

}  // namespace tgrasp
