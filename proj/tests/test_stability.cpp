#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "tgrasp/stability.hpp"

using namespace tgrasp;

namespace {

std::vector<Vec> blob(Rng& rng, const Vec& centre, double sd, std::size_t n) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vec x(centre.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = centre[j] + sd * rng.normal();
    out.push_back(std::move(x));
  }
  return out;
}

// Random mixture data: 1-4 blobs in 1-5 dimensions with random scales.
std::vector<Vec> random_dataset(Rng& rng) {
  const std::size_t d = 1 + rng.index(5);
  const std::size_t blobs = 1 + rng.index(4);
  std::vector<Vec> data;
  for (std::size_t b = 0; b < blobs; ++b) {
    Vec c(d);
    for (auto& v : c) v = rng.uniform(-10.0, 10.0);
    auto part = blob(rng, c, rng.uniform(0.2, 3.0), 20 + rng.index(60));
    data.insert(data.end(), part.begin(), part.end());
  }
  return data;
}

// Orthonormal basis from Gram-Schmidt on random vectors; columns are the axes.
Matrix random_rotation(std::size_t d, Rng& rng) {
  Matrix q(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    Vec v(d);
    for (auto& e : v) e = rng.normal();
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * q(i, p);
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * q(i, p);
    }
    double n = 0.0;
    for (double e : v) n += e * e;
    n = std::sqrt(n);
    for (std::size_t i = 0; i < d; ++i) q(i, c) = v[i] / n;
  }
  return q;
}

Matrix covariance_from(const Matrix& axes, const Vec& variances) {
  const std::size_t d = variances.size();
  Matrix c(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) c(i, j) += axes(i, k) * variances[k] * axes(j, k);
  return c;
}

GmmModel random_model(Rng& rng, std::size_t m, std::size_t d) {
  Vec w(m);
  double ws = 0.0;
  for (auto& v : w) ws += (v = rng.uniform(0.1, 1.0));
  for (auto& v : w) v /= ws;
  std::vector<Vec> means;
  std::vector<Matrix> covs;
  for (std::size_t k = 0; k < m; ++k) {
    Vec mu(d);
    for (auto& v : mu) v = rng.uniform(-2.0, 2.0);
    Vec var(d);
    for (auto& v : var) v = rng.uniform(0.3, 2.0);
    means.push_back(mu);
    covs.push_back(covariance_from(random_rotation(d, rng), var));
  }
  return GmmModel::from_parameters(w, means, covs);
}

}  // namespace

TEST(KMeans, SingleClusterIsSampleMean) {
  Rng rng(1);
  const auto data = blob(rng, {1.0, -2.0, 3.0}, 1.5, 50);
  const auto r = kmeans_init(data, 1, 7);
  Vec mean;
  Matrix cov;
  oracle::sample_moments(data, 0.0, mean, cov);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.means[0][i], mean[i], 1e-12);
}

TEST(KMeans, SeparatedBlobsRecoverBlobMeans) {
  Rng rng(2);
  auto a = blob(rng, {0.0}, 1.0, 40);
  auto b = blob(rng, {100.0}, 1.0, 40);
  auto data = a;
  data.insert(data.end(), b.begin(), b.end());
  const auto r = kmeans_init(data, 2, 3);
  double ma = 0.0, mb = 0.0;
  for (const auto& x : a) ma += x[0] / 40.0;
  for (const auto& x : b) mb += x[0] / 40.0;
  const double lo = std::min(r.means[0][0], r.means[1][0]);
  const double hi = std::max(r.means[0][0], r.means[1][0]);
  EXPECT_NEAR(lo, ma, 1e-9);
  EXPECT_NEAR(hi, mb, 1e-9);
}

TEST(KMeans, OneCentrePerPoint) {
  Rng rng(3);
  const auto data = blob(rng, {0.0, 0.0}, 5.0, 6);
  const auto r = kmeans_init(data, 6, 1);
  EXPECT_EQ(r.distortion, 0.0);
  EXPECT_THROW(kmeans_init(data, 7, 1), DataError);
}

TEST(Em, LogLikelihoodNeverDecreases) {
  Rng rng(4);
  double worst_drop = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto data = random_dataset(rng);
    const std::size_t m = 1 + rng.index(std::min<std::size_t>(4, data.size() / 5));
    const auto g = em_fit(data, m, static_cast<std::uint64_t>(t), EmConfig{60, 0.0, 1e-6});
    const auto& h = g.log_likelihood_history();
    ASSERT_GE(h.size(), 2u);
    for (std::size_t i = 1; i < h.size(); ++i) worst_drop = std::max(worst_drop, h[i - 1] - h[i]);
  }
  EXPECT_LE(worst_drop, 1e-9);
}

TEST(Em, SingleComponentIsClosedFormMle) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto data = random_dataset(rng);
    const auto g = em_fit(data, 1, 9);
    Vec mean;
    Matrix cov;
    oracle::sample_moments(data, g.reg_eps(), mean, cov);
    for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(g.means()[0][i], mean[i], 1e-9);
    for (std::size_t i = 0; i < cov.size(); ++i) EXPECT_NEAR(g.covariances()[0].data()[i], cov.data()[i], 1e-9);
    EXPECT_DOUBLE_EQ(g.weights()[0], 1.0);
  }
}

TEST(Em, TwoBlobsWithinThreeStandardErrors) {
  Rng rng(6);
  const std::size_t n = 200;
  auto a = blob(rng, {-5.0, 0.0}, 1.0, n);
  auto b = blob(rng, {5.0, 2.0}, 1.0, n);
  auto data = a;
  data.insert(data.end(), b.begin(), b.end());
  const auto g = em_fit(data, 2, 1);
  const double se = 1.0 / std::sqrt(static_cast<double>(n));
  const bool first_is_a = g.means()[0][0] < 0.0;
  const Vec& ma = g.means()[first_is_a ? 0 : 1];
  const Vec& mb = g.means()[first_is_a ? 1 : 0];
  EXPECT_NEAR(ma[0], -5.0, 3 * se);
  EXPECT_NEAR(ma[1], 0.0, 3 * se);
  EXPECT_NEAR(mb[0], 5.0, 3 * se);
  EXPECT_NEAR(mb[1], 2.0, 3 * se);
}

TEST(Em, RefitIsByteIdentical) {
  Rng rng(7);
  const auto data = random_dataset(rng);
  EXPECT_EQ(em_fit(data, 2, 3).to_archive().serialize(), em_fit(data, 2, 3).to_archive().serialize());
}

TEST(Em, SingularCovarianceNamesComponent) {
  std::vector<Vec> data;
  for (int i = 0; i < 20; ++i) data.push_back({static_cast<double>(i), 1.0});  // second axis constant
  try {
    em_fit(data, 1, 1, EmConfig{10, 1e-7, 0.0});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.component(), 0u);
  }
  EXPECT_THROW(em_fit(data, 5, 1), DataError);
}

TEST(Gmm, StandardNormalPeak) {
  const auto g = GmmModel::from_parameters({1.0}, {{0.0}}, {Matrix{{1.0}}});
  EXPECT_NEAR(gmm_likelihood(g, Vec{0.0}), 0.398942280401, 1e-12);
  const auto g2 = GmmModel::from_parameters({0.5, 0.5}, {{0.0}, {0.0}}, {Matrix{{1.0}}, Matrix{{1.0}}});
  EXPECT_NEAR(gmm_likelihood(g2, Vec{0.7}), gmm_likelihood(g, Vec{0.7}), 1e-15);
  EXPECT_THROW(gmm_likelihood(g, Vec{0.0, 1.0}), DimensionError);
}

TEST(Gmm, MatchesDenseOracle) {
  Rng rng(8);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng.index(4), d = 1 + rng.index(5);
    const auto g = random_model(rng, m, d);
    Vec x(d);
    for (auto& v : x) v = rng.uniform(-4.0, 4.0);
    const double p = gmm_likelihood(g, x);
    const double q = oracle::dense_mixture_density(g.weights(), g.means(), g.covariances(), x);
    EXPECT_GE(p, 0.0);
    worst = std::max(worst, std::abs(p - q) / q);
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Gmm, OneDimensionalDensityIntegratesToOne) {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 1 + rng.index(3);
    const auto g = random_model(rng, m, 1);
    double lo = 1e300, hi = -1e300;
    for (std::size_t k = 0; k < m; ++k) {
      const double sd = std::sqrt(g.covariances()[k](0, 0));
      lo = std::min(lo, g.means()[k][0] - 10 * sd);
      hi = std::max(hi, g.means()[k][0] + 10 * sd);
    }
    const int n = 10000;
    const double h = (hi - lo) / (n - 1);
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      integral += w * gmm_likelihood(g, Vec{lo + i * h}) * h;
    }
    EXPECT_NEAR(integral, 1.0, 1e-4);
  }
}

TEST(TwoSigma, DirectFormula) {
  const auto g1 = GmmModel::from_parameters({1.0}, {{0.0}}, {Matrix{{1.0}}});
  EXPECT_NEAR(two_sigma_bounds(g1).a, 0.0539909665, 1e-10);
  const auto g2 = GmmModel::from_parameters({1.0}, {{0.0, 0.0}}, {Matrix::identity(2)});
  const auto b2 = two_sigma_bounds(g2);
  EXPECT_NEAR(b2.a, 0.0215392793, 1e-10);
  EXPECT_EQ(b2.a, b2.b);
}

TEST(TwoSigma, BoundsOrderedForRandomModels) {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const auto b = two_sigma_bounds(random_model(rng, 1 + rng.index(4), 1 + rng.index(4)));
    EXPECT_LE(b.a, b.b);
  }
}

TEST(TwoSigma, ConsistentWithLikelihoodAtPrincipalAxes) {
  Rng rng(11);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 1 + rng.index(6);
    const Matrix axes = random_rotation(d, rng);
    Vec var(d), mu(d);
    for (auto& v : var) v = rng.uniform(0.2, 3.0);
    for (auto& v : mu) v = rng.uniform(-3.0, 3.0);
    const auto g = GmmModel::from_parameters({1.0}, {mu}, {covariance_from(axes, var)});
    const double lik2 = two_sigma_bounds(g).a;
    for (std::size_t k = 0; k < d; ++k) {
      for (double sign : {-1.0, 1.0}) {
        Vec x = mu;
        for (std::size_t i = 0; i < d; ++i) x[i] += sign * 2.0 * std::sqrt(var[k]) * axes(i, k);
        worst = std::max(worst, std::abs(gmm_likelihood(g, x) - lik2) / lik2);
      }
    }
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Threshold, SeparatedSetsReachPerfectSplit) {
  const std::vector<double> st{0.9, 0.8}, un{0.1, 0.2};
  const auto r = select_threshold_from_likelihoods(st, un, {0.05, 0.95, std::log(0.05), std::log(0.95)});
  EXPECT_EQ(r.chosen_j, 1.0);
  EXPECT_GE(r.te, 0.2);
  EXPECT_LT(r.te, 0.8);
  EXPECT_FALSE(r.clamped);
}

TEST(Threshold, TwoCandidateEnumeration) {
  const std::vector<double> st{0.5}, un{0.4};
  const auto r = select_threshold_from_likelihoods(st, un, {0.1, 0.9, std::log(0.1), std::log(0.9)});
  EXPECT_EQ(r.te, 0.4);
  EXPECT_EQ(r.chosen_j, 1.0);
}

TEST(Threshold, IdenticalSetsAreNotSeparable) {
  const std::vector<double> s{0.3, 0.5, 0.7};
  const auto r = select_threshold_from_likelihoods(s, s, {0.1, 0.9, std::log(0.1), std::log(0.9)});
  EXPECT_EQ(r.chosen_j, 0.0);
  EXPECT_FALSE(r.separable);
  EXPECT_THROW(select_threshold_from_likelihoods(s, std::vector<double>{}, {0.1, 0.9, 0, 0}), DataError);
}

TEST(Threshold, OutsideBoundsIsClampedAndFlagged) {
  const std::vector<double> st{5.0, 6.0}, un{3.0, 4.0};
  const auto r = select_threshold_from_likelihoods(st, un, {0.1, 0.9, std::log(0.1), std::log(0.9)});
  EXPECT_TRUE(r.clamped);
  EXPECT_GE(r.te, 0.1);
  EXPECT_LE(r.te, 0.9);
}

TEST(Threshold, RatesFallWithThreshold) {
  Rng rng(12);
  std::vector<double> st, un;
  for (int i = 0; i < 200; ++i) st.push_back(rng.uniform(0.3, 1.0));
  for (int i = 0; i < 200; ++i) un.push_back(rng.uniform(0.0, 0.6));
  const auto r = select_threshold_from_likelihoods(st, un, {0.0, 1.0, -1e300, 0.0});
  for (std::size_t i = 1; i < r.roc_points.size(); ++i) {
    EXPECT_LE(r.roc_points[i].tpr, r.roc_points[i - 1].tpr);
    EXPECT_LE(r.roc_points[i].fpr, r.roc_points[i - 1].fpr);
  }
}

TEST(Threshold, StrictInequalityAtBoundary) {
  const auto g = GmmModel::from_parameters({1.0}, {{0.0}}, {Matrix{{1.0}}});
  const Vec x{0.3};
  const double p = gmm_likelihood(g, x);
  EXPECT_FALSE(is_stable(g, p, x));
  EXPECT_TRUE(is_stable(g, 1e-300, Vec{0.0}));
}

TEST(Roc, AucOfKnownScores) {
  EXPECT_EQ(roc_auc({3.0, 4.0}, {1.0, 2.0}), 1.0);
  EXPECT_EQ(roc_auc({1.0}, {1.0}), 0.5);
  EXPECT_EQ(roc_auc({1.0, 4.0}, {2.0, 3.0}), 0.5);
}

TEST(Estimator, ArchiveRoundTrip) {
  Rng rng(13);
  StabilityEstimator e{em_fit(random_dataset(rng), 1, 1), 0.125};
  const auto bytes = e.to_archive().serialize();
  const auto back = StabilityEstimator::from_archive(ModelArchive::deserialize(bytes));
  EXPECT_EQ(back.to_archive().serialize(), bytes);
  EXPECT_EQ(back.te, 0.125);
  EXPECT_THROW(StabilityEstimator::from_archive(ModelArchive("adapter")), ModelError);
}
