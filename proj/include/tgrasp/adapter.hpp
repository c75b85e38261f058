#pragma once

// Self-attention grasp adapter: a window of recent tactile change is mapped to
// a corrective angle step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tgrasp/archive.hpp"
#include "tgrasp/dataset.hpp"
#include "tgrasp/errors.hpp"
#include "tgrasp/generator.hpp"
#include "tgrasp/matrix.hpp"
#include "tgrasp/nn.hpp"
#include "tgrasp/rng.hpp"
#include "tgrasp/sim.hpp"
#include "tgrasp/split.hpp"
#include "tgrasp/tactile.hpp"

namespace tgrasp {

namespace adapter {
inline constexpr std::size_t kWindow = 16;
inline constexpr std::size_t kTokenDim = tactile::kTaxels + 2;  // dS | finger sum | theta
inline constexpr double kSumScale = 1.0 / 100.0;
inline constexpr double kThetaScale = 1.0 / 90.0;
inline constexpr double kMaxDeltaDeg = 5.0;
inline constexpr std::size_t kTrainStride = 4;  // ticks between training window ends
}  // namespace adapter

struct AdaptSample {
  TaxelArray dS{};
  TaxelArray S{};
  double theta_deg = 0.0;
  double dtheta_deg = 0.0;

  void validate() const {
    if (std::abs(dtheta_deg) > adapter::kMaxDeltaDeg + 1e-9) throw ValidationError("dtheta_deg", "exceeds 5 degrees");
    if (!std::isfinite(theta_deg) || !std::isfinite(dtheta_deg)) throw ValidationError("theta_deg", "not finite");
    for (std::size_t i = 0; i < dS.size(); ++i) {
      if (!std::isfinite(dS[i]) || !std::isfinite(S[i])) throw ValidationError("dS", "not finite");
    }
  }
};

// Tokens for the 16 most recent ticks, oldest first; missing history is zero
// rows at the top.
struct WindowBuffer {
  Matrix tokens{adapter::kWindow, adapter::kTokenDim};
};

struct HistoryEntry {
  TaxelFrame frame;
  double theta_deg = 0.0;
};

inline void fill_token(std::span<double> token, const TaxelArray& dS, const TaxelArray& S, double theta_deg) {
  std::copy(dS.begin(), dS.end(), token.begin());
  double sum = 0.0;
  for (double v : S) sum += v;
  token[tactile::kTaxels] = 0.5 * sum * adapter::kSumScale;  // mean per-finger sum
  token[tactile::kTaxels + 1] = theta_deg * adapter::kThetaScale;
}

inline WindowBuffer build_window_features(std::span<const HistoryEntry> history) {
  if (history.empty()) throw ContractError("window needs at least one history entry");
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].frame.t_tick != history[i - 1].frame.t_tick + 1) {
      throw SequencingError("history ticks " + std::to_string(history[i - 1].frame.t_tick) + " -> " +
                            std::to_string(history[i].frame.t_tick) + " are not consecutive");
    }
  }
  WindowBuffer w;
  const std::size_t n = std::min(history.size(), adapter::kWindow);
  const std::size_t first = history.size() - n;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t h = first + j;
    const TaxelArray dS = h > 0 ? delta_frame(history[h].frame, history[h - 1].frame) : TaxelArray{};
    fill_token(w.tokens.row(adapter::kWindow - n + j), dS, history[h].frame.values, history[h].theta_deg);
  }
  return w;
}

// Window ending at frame `end` of a recorded episode, using the recorded dS.
inline WindowBuffer window_from_record(const std::vector<Frame>& frames, std::size_t end) {
  WindowBuffer w;
  const std::size_t n = std::min(end + 1, adapter::kWindow);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& f = frames[end + 1 - n + j];
    fill_token(w.tokens.row(adapter::kWindow - n + j), f.dS, f.S, f.theta_deg);
  }
  return w;
}

struct AdapterConfig {
  double lr = 0.001;
  std::size_t batch = 64;
  std::size_t epochs = 100;
  std::size_t layers = 2;
  std::size_t d_k = 16;
  std::size_t hidden = 64;
  std::uint64_t seed = 1;
};

struct AttentionBlock {
  nn::AttentionParams attn;
  Matrix w_o;  // d_k x d_model, projects back onto the residual stream
};

struct AdapterGrads {
  std::vector<nn::AttentionGrads> blocks;
  std::vector<Matrix> d_w_o;
  nn::MlpGrads head;
};

class AdapterModel {
 public:
  AdapterModel() = default;

  static AdapterModel initialized(const AdapterConfig& cfg, Rng& rng) {
    AdapterModel m;
    m.config_ = cfg;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      AttentionBlock b;
      b.attn = nn::AttentionParams::random(adapter::kTokenDim, cfg.d_k, rng);
      b.w_o = nn::init_uniform(cfg.d_k, adapter::kTokenDim, rng);
      m.blocks_.push_back(std::move(b));
    }
    m.head_.push_back(nn::DenseLayer::random(adapter::kTokenDim, cfg.hidden, nn::Activation::relu, rng));
    m.head_.push_back(nn::DenseLayer::random(cfg.hidden, 1, nn::Activation::identity, rng));
    m.trained_ = true;
    return m;
  }

  bool trained() const noexcept { return trained_; }
  const AdapterConfig& config() const noexcept { return config_; }
  std::vector<AttentionBlock>& blocks() noexcept { return blocks_; }
  const std::vector<AttentionBlock>& blocks() const noexcept { return blocks_; }
  std::vector<nn::DenseLayer>& head() noexcept { return head_; }
  const std::vector<nn::DenseLayer>& head() const noexcept { return head_; }

  void require_trained() const {
    if (!trained_ || head_.size() != 2 || blocks_.empty()) throw ModelError("adapter model is untrained");
  }

  // Parameters in a fixed order; gradients() flattens in the same order.
  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> p;
    for (auto& b : blocks_) {
      p.push_back(&b.attn.w_q);
      p.push_back(&b.attn.w_k);
      p.push_back(&b.attn.w_v);
      p.push_back(&b.w_o);
    }
    for (auto& l : head_) {
      p.push_back(&l.w);
      p.push_back(&l.b);
    }
    return p;
  }

  struct Trace {
    std::vector<nn::AttentionCache> attn;
    std::vector<Matrix> attn_out;
    nn::MlpCache head;
    double y = 0.0;
  };

  // Unclamped output for one window.
  double forward(const Matrix& tokens, Trace* trace = nullptr) const {
    Matrix x = tokens;
    for (const auto& b : blocks_) {
      auto out = nn::attention_forward(x, b.attn);
      x += matmul(out.y, b.w_o, "attention output", "W_O");
      if (trace) {
        trace->attn.push_back(std::move(out.cache));
        trace->attn_out.push_back(std::move(out.y));
      }
    }
    Matrix last(1, adapter::kTokenDim);
    const auto r = x.row(x.rows() - 1);
    std::copy(r.begin(), r.end(), last.row(0).begin());
    auto head = nn::mlp_forward(last, head_);
    const double y = head.y(0, 0);
    if (trace) {
      trace->head = std::move(head.cache);
      trace->y = y;
    }
    return y;
  }

  // Gradient of the output with respect to every parameter, scaled by d_y.
  AdapterGrads backward(double d_y, const Trace& trace) const {
    AdapterGrads g;
    g.head = nn::mlp_backward(Matrix(1, 1, d_y), trace.head, head_);
    Matrix dx(adapter::kWindow, adapter::kTokenDim);
    std::copy(g.head.d_x.row(0).begin(), g.head.d_x.row(0).end(), dx.row(adapter::kWindow - 1).begin());
    g.blocks.resize(blocks_.size());
    g.d_w_o.resize(blocks_.size());
    for (std::size_t l = blocks_.size(); l-- > 0;) {
      g.d_w_o[l] = matmul_tn(trace.attn_out[l], dx);
      const Matrix d_attn = matmul_nt(dx, blocks_[l].w_o);
      g.blocks[l] = nn::attention_backward(d_attn, trace.attn[l]);
      dx += g.blocks[l].d_x;
    }
    return g;
  }

  static std::vector<Matrix> flatten(AdapterGrads&& g) {
    std::vector<Matrix> out;
    for (std::size_t l = 0; l < g.blocks.size(); ++l) {
      out.push_back(std::move(g.blocks[l].d_w_q));
      out.push_back(std::move(g.blocks[l].d_w_k));
      out.push_back(std::move(g.blocks[l].d_w_v));
      out.push_back(std::move(g.d_w_o[l]));
    }
    for (std::size_t l = 0; l < g.head.d_w.size(); ++l) {
      out.push_back(std::move(g.head.d_w[l]));
      out.push_back(std::move(g.head.d_b[l]));
    }
    return out;
  }

  ModelArchive to_archive() const {
    require_trained();
    ModelArchive a("adapter");
    a.set_attr("topology", std::to_string(blocks_.size()) + "x attention(d_model=34,d_k=" +
                               std::to_string(config_.d_k) + ",residual) + mlp:34-" + std::to_string(config_.hidden) +
                               "relu-1");
    a.set_attr("layers", static_cast<std::int64_t>(blocks_.size()));
    a.set_attr("d_k", static_cast<std::int64_t>(config_.d_k));
    a.set_attr("hidden", static_cast<std::int64_t>(config_.hidden));
    a.set_attr("window", static_cast<std::int64_t>(adapter::kWindow));
    a.set_attr("epochs", static_cast<std::int64_t>(config_.epochs));
    a.set_attr("batch", static_cast<std::int64_t>(config_.batch));
    a.set_attr("seed", static_cast<std::int64_t>(config_.seed));
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const std::string p = "block" + std::to_string(l);
      a.add(p + ".w_q", blocks_[l].attn.w_q);
      a.add(p + ".w_k", blocks_[l].attn.w_k);
      a.add(p + ".w_v", blocks_[l].attn.w_v);
      a.add(p + ".w_o", blocks_[l].w_o);
    }
    for (std::size_t l = 0; l < head_.size(); ++l) {
      a.add("head" + std::to_string(l) + ".w", head_[l].w);
      a.add("head" + std::to_string(l) + ".b", head_[l].b);
    }
    return a;
  }

  static AdapterModel from_archive(const ModelArchive& a) {
    if (a.kind() != "adapter") throw ModelError("expected an adapter model, found '" + a.kind() + "'");
    if (a.attr_int("window") != static_cast<std::int64_t>(adapter::kWindow)) throw ModelError("adapter window mismatch");
    AdapterModel m;
    m.config_.layers = static_cast<std::size_t>(a.attr_int("layers"));
    m.config_.d_k = static_cast<std::size_t>(a.attr_int("d_k"));
    m.config_.hidden = static_cast<std::size_t>(a.attr_int("hidden"));
    m.config_.epochs = static_cast<std::size_t>(a.attr_int("epochs"));
    m.config_.batch = static_cast<std::size_t>(a.attr_int("batch"));
    m.config_.seed = static_cast<std::uint64_t>(a.attr_int("seed"));
    const auto dm = adapter::kTokenDim;
    const auto dk = m.config_.d_k;
    for (std::size_t l = 0; l < m.config_.layers; ++l) {
      const std::string p = "block" + std::to_string(l);
      AttentionBlock b;
      b.attn.w_q = a.matrix(p + ".w_q", dm, dk);
      b.attn.w_k = a.matrix(p + ".w_k", dm, dk);
      b.attn.w_v = a.matrix(p + ".w_v", dm, dk);
      b.w_o = a.matrix(p + ".w_o", dk, dm);
      m.blocks_.push_back(std::move(b));
    }
    const std::size_t dims[3] = {dm, m.config_.hidden, 1};
    for (std::size_t l = 0; l < 2; ++l) {
      nn::DenseLayer d;
      d.w = a.matrix("head" + std::to_string(l) + ".w", dims[l], dims[l + 1]);
      d.b = a.matrix("head" + std::to_string(l) + ".b", 1, dims[l + 1]);
      d.activation = l == 0 ? nn::Activation::relu : nn::Activation::identity;
      m.head_.push_back(std::move(d));
    }
    for (Matrix* p : m.parameters()) {
      if (!p->all_finite()) throw ModelError("adapter weights are not finite");
    }
    m.trained_ = true;
    return m;
  }

  void save(const std::string& path) const { to_archive().save(path); }
  static AdapterModel load(const std::string& path) { return from_archive(ModelArchive::load(path)); }

 private:
  AdapterConfig config_;
  std::vector<AttentionBlock> blocks_;
  std::vector<nn::DenseLayer> head_;
  bool trained_ = false;
};

inline double predict_delta_theta(const AdapterModel& model, const WindowBuffer& w) {
  model.require_trained();
  const double y = model.forward(w.tokens);
  if (!std::isfinite(y)) throw ModelError("adapter produced a non-finite output");
  return std::clamp(y, -adapter::kMaxDeltaDeg, adapter::kMaxDeltaDeg);
}

inline double apply_adaptation(double theta_deg, double dtheta_deg) {
  return std::clamp(theta_deg + dtheta_deg, sim::kThetaMin, sim::kThetaMax);
}

struct AdaptWindow {
  WindowBuffer window;
  double label = 0.0;
};

// Windows ending at every `stride`-th frame of each episode (counting from the
// episode's first frame), labelled with that frame's dtheta.
inline std::vector<AdaptWindow> windows_from_episodes(const std::vector<EpisodeRecord>& episodes,
                                                      std::size_t stride = adapter::kTrainStride) {
  if (stride == 0) throw ContractError("window stride must be positive");
  std::vector<AdaptWindow> out;
  for (const auto& ep : episodes) {
    for (std::size_t end = stride - 1; end < ep.frames.size(); end += stride) {
      out.push_back({window_from_record(ep.frames, end), ep.frames[end].dtheta_deg});
    }
  }
  return out;
}

struct AdapterTraining {
  AdapterModel model;
  std::vector<EpochLoss> history;
  double val_label_variance = 0.0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

namespace detail {

inline double adapter_loss(const AdapterModel& m, const std::vector<AdaptWindow>& data) {
  if (data.empty()) return 0.0;
  std::vector<double> pred, target;
  for (const auto& w : data) {
    pred.push_back(m.forward(w.window.tokens));
    target.push_back(w.label);
  }
  return nn::mse_loss(pred, target).loss;
}

}  // namespace detail

/// Adam on the half-MSE loss over windows, 8:2 split, deterministic in seed.
/// Per-sample gradients are accumulated in batch order. The recorded training
/// loss is the running loss over the epoch's minibatches.
inline AdapterTraining train_adapter(const std::vector<AdaptWindow>& data, const AdapterConfig& cfg = {}) {
  if (data.size() < 50) throw DataError("train_adapter needs at least 50 windows, got " + std::to_string(data.size()));
  if (cfg.batch == 0 || cfg.epochs == 0 || cfg.layers == 0) throw ContractError("batch, epochs and layers must be positive");
  for (const auto& w : data) {
    if (!std::isfinite(w.label) || std::abs(w.label) > adapter::kMaxDeltaDeg + 1e-9) {
      throw ValidationError("dtheta_deg", "window label outside the 5 degree bound");
    }
  }
  const auto split = split_dataset(data, cfg.seed, 50);
  AdapterTraining out;
  out.n_train = split.train.size();
  out.n_val = split.val.size();
  {
    std::vector<double> labels;
    for (const auto& w : split.val) labels.push_back(w.label);
    out.val_label_variance = detail::variance(labels);
  }

  Rng rng(splitmix64(cfg.seed ^ 0x414441ULL));
  AdapterModel model = AdapterModel::initialized(cfg, rng);
  auto params = model.parameters();
  auto adam = nn::AdamState::for_params(params);

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> acc;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double sq_sum = 0.0;  // squared errors seen during the epoch, pre-step
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - start);
      acc.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = split.train[order[start + i]];
        AdapterModel::Trace trace;
        const double y = model.forward(s.window.tokens, &trace);
        const double err = y - s.label;
        sq_sum += err * err;
        const double d_y = err / static_cast<double>(n);
        if (!std::isfinite(d_y)) throw TrainingError("non-finite adapter loss", static_cast<std::int64_t>(epoch));
        auto g = AdapterModel::flatten(model.backward(d_y, trace));
        if (acc.empty()) {
          acc = std::move(g);
        } else {
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
      }
      nn::adam_step(params, acc, adam, cfg.lr);
    }
    EpochLoss e{epoch, sq_sum / (2.0 * static_cast<double>(order.size())), detail::adapter_loss(model, split.val)};
    if (!std::isfinite(e.train_loss) || !std::isfinite(e.val_loss)) {
      throw TrainingError("non-finite adapter loss", static_cast<std::int64_t>(epoch));
    }
    out.history.push_back(e);
  }
  out.model = std::move(model);
  return out;
}

}  // namespace tgrasp
