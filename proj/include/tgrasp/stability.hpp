#pragma once

// Grasp stability estimation: a Gaussian mixture over grasp features fitted
// by EM from k-means, the two-sigma likelihood bounds of its components, and
// ROC-based selection of the stability threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tgrasp/archive.hpp"
#include "tgrasp/errors.hpp"
#include "tgrasp/matrix.hpp"
#include "tgrasp/rng.hpp"
#include "tgrasp/sim.hpp"
#include "tgrasp/tactile.hpp"

namespace tgrasp {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Features

inline constexpr std::size_t kFeatureDim = tactile::kTaxels + 1 + 7;

struct GraspFeature {
  Vec x;  // S (32) | theta (1) | P (7)

  static GraspFeature pack(const TaxelArray& S, double theta_deg, const Pose& pose) {
    GraspFeature f;
    f.x.reserve(kFeatureDim);
    f.x.insert(f.x.end(), S.begin(), S.end());
    f.x.push_back(theta_deg);
    f.x.insert(f.x.end(), pose.begin(), pose.end());
    f.validate();
    return f;
  }

  void validate() const {
    if (x.size() != kFeatureDim) {
      throw DimensionError("grasp feature has " + std::to_string(x.size()) + " entries, expected 40");
    }
    double qn = 0.0;
    for (std::size_t i = kFeatureDim - 4; i < kFeatureDim; ++i) qn += x[i] * x[i];
    if (std::abs(std::sqrt(qn) - 1.0) > 1e-6) throw ValidationError("P", "quaternion is not unit norm");
  }
};

// ---------------------------------------------------------------------------
// Linear algebra helpers

// Lower Cholesky factor, or nullopt when the matrix is not positive definite.
inline std::optional<Matrix> cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

inline double cholesky_log_det(const Matrix& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

// (x - mu)^T Sigma^{-1} (x - mu) via forward substitution with L.
inline double mahalanobis_sq(std::span<const double> x, std::span<const double> mean, const Matrix& l) {
  const std::size_t n = mean.size();
  double z_local[64];
  std::vector<double> z_heap;
  double* z = z_local;
  if (n > 64) {
    z_heap.resize(n);
    z = z_heap.data();
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i] - mean[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * z[k];
    z[i] = s / l(i, i);
    sum += z[i] * z[i];
  }
  return sum;
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
  std::vector<Vec> means;
  std::vector<std::size_t> assignments;
  std::size_t iterations = 0;
  double distortion = 0.0;
};

inline void require_uniform_dim(const std::vector<Vec>& data) {
  if (data.empty()) throw DataError("empty dataset");
  const auto d = data.front().size();
  if (d == 0) throw DimensionError("zero-dimensional data");
  for (const auto& x : data)
    if (x.size() != d) throw DimensionError("ragged dataset: " + std::to_string(x.size()) + " vs " + std::to_string(d));
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or 50 iterations have run. An emptied cluster is moved to the point
/// farthest from its current centre.
inline KMeansResult kmeans_init(const std::vector<Vec>& data, std::size_t m, std::uint64_t seed,
                                std::size_t max_iter = 50) {
  if (m == 0) throw DataError("k-means needs at least one cluster");
  if (data.size() < m) {
    throw DataError("k-means needs at least " + std::to_string(m) + " points, got " + std::to_string(data.size()));
  }
  require_uniform_dim(data);
  const std::size_t n = data.size();
  const std::size_t d = data.front().size();
  Rng rng(seed);

  KMeansResult r;
  r.means.push_back(data[rng.index(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(data[i], r.means[0]);
  while (r.means.size() < m) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = rng.index(n);
    }
    r.means.push_back(data[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(data[i], r.means.back()));
  }

  r.assignments.assign(n, m);  // sentinel: nothing assigned yet
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(data[i], r.means[0]);
      for (std::size_t k = 1; k < m; ++k) {
        const double dk = squared_distance(data[i], r.means[k]);
        if (dk < best_d) {
          best_d = dk;
          best = k;
        }
      }
      if (r.assignments[i] != best) {
        r.assignments[i] = best;
        changed = true;
      }
    }
    r.iterations = it + 1;
    if (!changed) break;

    std::vector<Vec> sums(m, Vec(d, 0.0));
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[r.assignments[i]];
      for (std::size_t j = 0; j < d; ++j) s[j] += data[i][j];
      counts[r.assignments[i]] += 1;
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (counts[k] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) r.means[k][j] = sums[k][j] / static_cast<double>(counts[k]);
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (counts[k] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double di = squared_distance(data[i], r.means[r.assignments[i]]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      counts[r.assignments[far]] -= 1;
      r.assignments[far] = k;
      counts[k] = 1;
      r.means[k] = data[far];
    }
  }
  r.distortion = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.distortion += squared_distance(data[i], r.means[r.assignments[i]]);
  return r;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

inline constexpr double kDefaultGmmReg = 1e-6;

struct EmConfig {
  std::size_t max_iter = 100;
  double tol = 1e-7;
  double reg_eps = kDefaultGmmReg;
};

class GmmModel;
GmmModel em_fit(const std::vector<Vec>& data, std::size_t m, std::uint64_t seed, const EmConfig& cfg = {});

class GmmModel {
 public:
  static constexpr double kDefaultReg = kDefaultGmmReg;

  GmmModel() = default;

  // Builds a model from explicit parameters; covariances are used as given.
  static GmmModel from_parameters(Vec weights, std::vector<Vec> means, std::vector<Matrix> covariances,
                                  double reg_eps = kDefaultReg) {
    GmmModel g;
    g.weights_ = std::move(weights);
    g.means_ = std::move(means);
    g.covariances_ = std::move(covariances);
    g.reg_eps_ = reg_eps;
    g.refactor();
    return g;
  }

  std::size_t components() const noexcept { return weights_.size(); }
  std::size_t dim() const noexcept { return means_.empty() ? 0 : means_.front().size(); }
  double reg_eps() const noexcept { return reg_eps_; }
  const Vec& weights() const noexcept { return weights_; }
  const std::vector<Vec>& means() const noexcept { return means_; }
  const std::vector<Matrix>& covariances() const noexcept { return covariances_; }
  const std::vector<Matrix>& cholesky_factors() const noexcept { return chol_; }
  const std::vector<double>& log_dets() const noexcept { return log_det_; }
  const std::vector<double>& log_likelihood_history() const noexcept { return history_; }
  std::vector<double>& log_likelihood_history() noexcept { return history_; }

  double component_log_density(std::size_t k, std::span<const double> x) const {
    const double d = static_cast<double>(dim());
    return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_[k] + mahalanobis_sq(x, means_[k], chol_[k]));
  }

  double log_likelihood(std::span<const double> x) const {
    if (x.size() != dim()) {
      throw DimensionError("feature has " + std::to_string(x.size()) + " entries, model expects " +
                           std::to_string(dim()));
    }
    double terms_local[16];
    std::vector<double> terms_heap;
    double* terms = terms_local;
    if (components() > 16) {
      terms_heap.resize(components());
      terms = terms_heap.data();
    }
    for (std::size_t k = 0; k < components(); ++k) {
      terms[k] = weights_[k] > 0.0 ? std::log(weights_[k]) + component_log_density(k, x)
                                   : -std::numeric_limits<double>::infinity();
    }
    return log_sum_exp(std::span<const double>(terms, components()));
  }

  void validate() const {
    if (components() == 0) throw ModelError("mixture has no components");
    double s = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw ModelError("negative mixture weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ModelError("mixture weights sum to " + std::to_string(s));
    if (means_.size() != components() || covariances_.size() != components()) {
      throw ModelError("mixture parameter counts disagree");
    }
  }

  ModelArchive to_archive() const {
    ModelArchive a("gmm");
    a.set_attr("m", static_cast<std::int64_t>(components()));
    a.set_attr("dim", static_cast<std::int64_t>(dim()));
    a.add("reg_eps", Vec{reg_eps_});
    a.add("weights", weights_);
    Matrix means(components(), dim());
    for (std::size_t k = 0; k < components(); ++k) std::copy(means_[k].begin(), means_[k].end(), means.row(k).begin());
    a.add("means", means);
    for (std::size_t k = 0; k < components(); ++k) a.add("chol" + std::to_string(k), chol_[k]);
    a.add("log_likelihood_history", history_);
    return a;
  }

  // Covariances are rebuilt as L L^T from the stored factors.
  static GmmModel from_archive(const ModelArchive& a) {
    if (a.kind() != "gmm" && a.kind() != "estimator") throw ModelError("expected a gmm model, found '" + a.kind() + "'");
    const auto m = static_cast<std::size_t>(a.attr_int("m"));
    const auto d = static_cast<std::size_t>(a.attr_int("dim"));
    GmmModel g;
    const auto reg = a.vector("reg_eps");
    if (reg.size() != 1) throw ModelError("reg_eps must be scalar");
    g.reg_eps_ = reg[0];
    g.weights_ = a.vector("weights");
    if (g.weights_.size() != m) throw ModelError("weights length disagrees with m");
    const Matrix means = a.matrix("means", m, d);
    for (std::size_t k = 0; k < m; ++k) {
      const auto r = means.row(k);
      g.means_.emplace_back(r.begin(), r.end());
      Matrix l = a.matrix("chol" + std::to_string(k), d, d);
      for (std::size_t i = 0; i < d; ++i) {
        if (!(l(i, i) > 0.0)) throw ModelError("cholesky factor " + std::to_string(k) + " is not positive");
      }
      g.covariances_.push_back(matmul_nt(l, l));
      g.log_det_.push_back(cholesky_log_det(l));
      g.chol_.push_back(std::move(l));
    }
    g.history_ = a.vector("log_likelihood_history");
    g.validate();
    return g;
  }

 private:
  friend GmmModel em_fit(const std::vector<Vec>&, std::size_t, std::uint64_t, const EmConfig&);

  void refactor() {
    chol_.clear();
    log_det_.clear();
    for (std::size_t k = 0; k < covariances_.size(); ++k) {
      auto l = cholesky(covariances_[k]);
      if (!l) throw NumericalError("covariance is not positive definite", k);
      log_det_.push_back(cholesky_log_det(*l));
      chol_.push_back(std::move(*l));
    }
  }

  Vec weights_;
  std::vector<Vec> means_;
  std::vector<Matrix> covariances_;
  std::vector<Matrix> chol_;
  std::vector<double> log_det_;
  std::vector<double> history_;
  double reg_eps_ = kDefaultReg;
};

namespace detail {

// Weighted mean and MLE covariance plus reg * I.
inline void weighted_moments(const std::vector<Vec>& data, std::span<const double> w, double reg, Vec& mean,
                             Matrix& cov) {
  const std::size_t d = data.front().size();
  double total = 0.0;
  mean.assign(d, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (w[i] == 0.0) continue;
    total += w[i];
    for (std::size_t j = 0; j < d; ++j) mean[j] += w[i] * data[i][j];
  }
  for (auto& v : mean) v /= total;
  cov = Matrix(d, d);
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (w[i] == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) diff[j] = data[i][j] - mean[j];
    for (std::size_t r = 0; r < d; ++r) {
      const double wr = w[i] * diff[r];
      double* row = cov.data().data() + r * d;
      for (std::size_t c = 0; c <= r; ++c) row[c] += wr * diff[c];
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c <= r; ++c) {
      const double v = cov(r, c) / total;
      cov(r, c) = v;
      cov(c, r) = v;
    }
    cov(r, r) += reg;
  }
}

}  // namespace detail

/// Fits an m-component mixture by EM started from k-means.
///
/// The log-likelihood of the initial parameters and after every M-step is
/// kept in log_likelihood_history(); iteration stops after max_iter M-steps or
/// once an M-step improves the total log-likelihood by less than tol.
inline GmmModel em_fit(const std::vector<Vec>& data, std::size_t m, std::uint64_t seed, const EmConfig& cfg) {
  require_uniform_dim(data);
  if (m == 0) throw DataError("mixture needs at least one component");
  if (data.size() < 5 * m) {
    throw DataError("EM with " + std::to_string(m) + " components needs at least " + std::to_string(5 * m) +
                    " points, got " + std::to_string(data.size()));
  }
  const std::size_t n = data.size();
  const auto km = kmeans_init(data, m, seed);

  GmmModel g;
  g.reg_eps_ = cfg.reg_eps;
  std::vector<double> w(n);
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = km.assignments[i] == k ? 1.0 : 0.0;
      count += km.assignments[i] == k;
    }
    if (count < 2) std::fill(w.begin(), w.end(), 1.0);  // too few points for a covariance
    Vec mean;
    Matrix cov;
    detail::weighted_moments(data, w, cfg.reg_eps, mean, cov);
    g.weights_.push_back(static_cast<double>(count) / static_cast<double>(n));
    g.means_.push_back(km.means[k]);
    g.covariances_.push_back(std::move(cov));
  }
  g.refactor();

  std::vector<double> resp(n * m);
  std::vector<double> terms(m);
  auto e_step = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        terms[k] = g.weights_[k] > 0.0 ? std::log(g.weights_[k]) + g.component_log_density(k, data[i])
                                       : -std::numeric_limits<double>::infinity();
      }
      const double lse = log_sum_exp(terms);
      total += lse;
      for (std::size_t k = 0; k < m; ++k) resp[i * m + k] = std::exp(terms[k] - lse);
    }
    return total;
  };

  double ll = e_step();
  g.history_.push_back(ll);
  std::vector<double> rk(n);
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    for (std::size_t k = 0; k < m; ++k) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        rk[i] = resp[i * m + k];
        nk += rk[i];
      }
      if (!(nk > 0.0)) throw NumericalError("component lost all responsibility", k);
      g.weights_[k] = nk / static_cast<double>(n);
      detail::weighted_moments(data, rk, cfg.reg_eps, g.means_[k], g.covariances_[k]);
    }
    double wsum = 0.0;
    for (double v : g.weights_) wsum += v;
    for (auto& v : g.weights_) v /= wsum;
    g.refactor();
    const double next = e_step();
    g.history_.push_back(next);
    const double gain = next - ll;
    ll = next;
    if (gain < cfg.tol) break;
  }
  return g;
}

inline double gmm_log_likelihood(const GmmModel& model, std::span<const double> x) { return model.log_likelihood(x); }

inline double gmm_likelihood(const GmmModel& model, std::span<const double> x) {
  return std::exp(model.log_likelihood(x));
}

inline double gmm_likelihood(const GmmModel& model, const GraspFeature& f) { return gmm_likelihood(model, f.x); }

struct LikelihoodBounds {
  double a = 0.0;
  double b = 0.0;
  double log_a = 0.0;
  double log_b = 0.0;
};

// Density of each component at Mahalanobis distance 2: (2 pi)^{-d/2} |Sigma|^{-1/2} e^{-2}.
inline double two_sigma_log_likelihood(const GmmModel& model, std::size_t k) {
  const double d = static_cast<double>(model.dim());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * model.log_dets()[k] - 2.0;
}

inline LikelihoodBounds two_sigma_bounds(const GmmModel& model) {
  model.validate();
  LikelihoodBounds b;
  b.log_a = std::numeric_limits<double>::infinity();
  b.log_b = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < model.components(); ++k) {
    const double l = two_sigma_log_likelihood(model, k);
    b.log_a = std::min(b.log_a, l);
    b.log_b = std::max(b.log_b, l);
  }
  b.a = std::exp(b.log_a);
  b.b = std::exp(b.log_b);
  return b;
}

// ---------------------------------------------------------------------------
// Threshold selection

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct ThresholdReport {
  double te = 0.0;
  double a = 0.0;
  double b = 0.0;
  std::vector<RocPoint> roc_points;  // ascending threshold
  double chosen_j = 0.0;
  double chosen_tpr = 0.0;
  double chosen_fpr = 0.0;
  std::size_t n_stable = 0;
  std::size_t n_unstable = 0;
  bool clamped = false;    // no labelled likelihood fell inside [a, b]
  bool separable = true;   // best J > 0

  std::string to_text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "# stability threshold report\n";
    os << "te\t" << te << "\n";
    os << "a\t" << a << "\n";
    os << "b\t" << b << "\n";
    os << "youden_j\t" << chosen_j << "\n";
    os << "tpr\t" << chosen_tpr << "\n";
    os << "fpr\t" << chosen_fpr << "\n";
    os << "n_stable\t" << n_stable << "\n";
    os << "n_unstable\t" << n_unstable << "\n";
    os << "clamped_to_bounds\t" << (clamped ? "yes" : "no") << "\n";
    os << "separable\t" << (separable ? "yes" : "no") << "\n";
    os << "# roc\nthreshold\tfpr\ttpr\n";
    for (const auto& p : roc_points) os << p.threshold << '\t' << p.fpr << '\t' << p.tpr << '\n';
    return os.str();
  }
};

// Rates under the rule "likelihood > te => stable".
inline RocPoint roc_at(double te, std::span<const double> stable, std::span<const double> unstable) {
  std::size_t tp = 0, fp = 0;
  for (double p : stable) tp += p > te;
  for (double p : unstable) fp += p > te;
  return {te, static_cast<double>(fp) / static_cast<double>(unstable.size()),
          static_cast<double>(tp) / static_cast<double>(stable.size())};
}

/// Picks te from the labelled likelihoods lying in [a, b] plus a and b
/// themselves, maximizing Youden's J = TPR - FPR; ties go to the larger te.
/// When no labelled likelihood lies in [a, b] the best unrestricted candidate
/// is clamped into the interval and the report is flagged.
inline ThresholdReport select_threshold_from_likelihoods(std::span<const double> stable,
                                                         std::span<const double> unstable,
                                                         const LikelihoodBounds& bounds) {
  if (stable.empty() || unstable.empty()) throw DataError("threshold selection needs stable and unstable samples");
  ThresholdReport rep;
  rep.a = bounds.a;
  rep.b = bounds.b;
  rep.n_stable = stable.size();
  rep.n_unstable = unstable.size();

  std::vector<double> all(stable.begin(), stable.end());
  all.insert(all.end(), unstable.begin(), unstable.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> candidates;
  for (double p : all)
    if (p >= rep.a && p <= rep.b) candidates.push_back(p);
  const bool any_inside = !candidates.empty();
  candidates.push_back(rep.a);
  candidates.push_back(rep.b);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto pick_best = [&](const std::vector<double>& cands) {
    RocPoint best{};
    double best_j = -std::numeric_limits<double>::infinity();
    for (double te : cands) {
      const auto pt = roc_at(te, stable, unstable);
      const double j = pt.tpr - pt.fpr;
      if (j > best_j || (j == best_j && te > best.threshold)) {
        best_j = j;
        best = pt;
      }
    }
    return best;
  };

  RocPoint chosen;
  if (any_inside) {
    chosen = pick_best(candidates);
  } else {
    const RocPoint unrestricted = pick_best(all);
    chosen = roc_at(std::clamp(unrestricted.threshold, rep.a, rep.b), stable, unstable);
    rep.clamped = true;
  }
  for (double te : candidates) rep.roc_points.push_back(roc_at(te, stable, unstable));
  rep.te = chosen.threshold;
  rep.chosen_tpr = chosen.tpr;
  rep.chosen_fpr = chosen.fpr;
  rep.chosen_j = chosen.tpr - chosen.fpr;
  rep.separable = rep.chosen_j > 0.0;
  return rep;
}

inline ThresholdReport select_threshold(const GmmModel& model, const std::vector<Vec>& stable_set,
                                        const std::vector<Vec>& unstable_set) {
  if (stable_set.empty() || unstable_set.empty()) {
    throw DataError("threshold selection needs non-empty stable and unstable sets");
  }
  std::vector<double> ps, pu;
  for (const auto& x : stable_set) ps.push_back(gmm_likelihood(model, x));
  for (const auto& x : unstable_set) pu.push_back(gmm_likelihood(model, x));
  return select_threshold_from_likelihoods(ps, pu, two_sigma_bounds(model));
}

inline bool is_stable(const GmmModel& model, double te, std::span<const double> x) {
  return gmm_likelihood(model, x) > te;
}

inline bool is_stable(const GmmModel& model, double te, const GraspFeature& f) { return is_stable(model, te, f.x); }

// Area under the ROC curve of a score where higher means "positive"; ties
// count one half.
inline double roc_auc(std::vector<double> positive, std::vector<double> negative) {
  if (positive.empty() || negative.empty()) throw DataError("AUC needs both classes");
  std::sort(negative.begin(), negative.end());
  double acc = 0.0;
  for (double p : positive) {
    const auto lo = std::lower_bound(negative.begin(), negative.end(), p);
    const auto hi = std::upper_bound(negative.begin(), negative.end(), p);
    acc += static_cast<double>(lo - negative.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return acc / (static_cast<double>(positive.size()) * static_cast<double>(negative.size()));
}

// A fitted mixture together with its selected threshold.
struct StabilityEstimator {
  GmmModel gmm;
  double te = 0.0;

  bool stable(const GraspFeature& f) const { return is_stable(gmm, te, f); }

  ModelArchive to_archive() const {
    ModelArchive a = gmm.to_archive();
    ModelArchive out("estimator");
    out.set_attr("m", static_cast<std::int64_t>(gmm.components()));
    out.set_attr("dim", static_cast<std::int64_t>(gmm.dim()));
    for (const auto& t : a.tensors()) {
      if (t.dims.size() == 2) {
        out.add(t.name, Matrix(t.dims[0], t.dims[1], t.data));
      } else {
        out.add(t.name, t.data);
      }
    }
    out.add("threshold", Vec{te});
    return out;
  }

  static StabilityEstimator from_archive(const ModelArchive& a) {
    if (a.kind() != "estimator") throw ModelError("expected an estimator model, found '" + a.kind() + "'");
    StabilityEstimator e;
    e.gmm = GmmModel::from_archive(a);
    const auto t = a.vector("threshold");
    if (t.size() != 1) throw ModelError("threshold must be scalar");
    e.te = t[0];
    return e;
  }

  void save(const std::string& path) const { to_archive().save(path); }
  static StabilityEstimator load(const std::string& path) { return from_archive(ModelArchive::load(path)); }
};

}  // namespace tgrasp
