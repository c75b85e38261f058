#include <gtest/gtest.h>

#include <cmath>

#include "tgrasp/objects.hpp"
#include "tgrasp/tactile.hpp"

using namespace tgrasp;

namespace {
const TactileOptions kQuiet{false};
}

TEST(Tactile, NoContactReadsZero) {
  const auto f = render_taxels(0.0, 0.5, 3, 1, {});
  for (double v : f.values) EXPECT_EQ(v, 0.0);
}

TEST(Tactile, CentredContactIsColumnSymmetric) {
  const auto f = render_taxels(2.0, 0.5, 0, 1, kQuiet);
  for (int r = 0; r < 4; ++r) {
    EXPECT_NEAR(f.values[r * 4 + 1], f.values[r * 4 + 2], 1e-15);
    EXPECT_NEAR(f.values[r * 4 + 0], f.values[r * 4 + 3], 1e-15);
  }
}

TEST(Tactile, OneNewtonSumsToGain) {
  // Footprint weights evaluated here from the Gaussian directly.
  const double cx = 1.5, cy = 1.5;
  double total = 0.0, w00 = 0.0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const double w = std::exp(-((c - cx) * (c - cx) + (r - cy) * (r - cy)) / 2.0);
      total += w;
      if (r == 0 && c == 0) w00 = w;
    }
  const auto f = render_taxels(1.0, 0.5, 0, 1, kQuiet);
  EXPECT_NEAR(f.finger_sum(0), 10.0, 1e-12);
  EXPECT_NEAR(f.finger_sum(1), 10.0, 1e-12);
  EXPECT_NEAR(f.values[0], 10.0 * w00 / total, 1e-12);
}

TEST(Tactile, NoiseIsBoundedAndKeyed) {
  const auto clean = render_taxels(3.0, 0.4, 17, 9, kQuiet);
  const auto noisy = render_taxels(3.0, 0.4, 17, 9, {});
  EXPECT_EQ(noisy, render_taxels(3.0, 0.4, 17, 9, {}));
  EXPECT_NE(noisy.values, render_taxels(3.0, 0.4, 18, 9, {}).values);
  EXPECT_NE(noisy.values, render_taxels(3.0, 0.4, 17, 10, {}).values);
  for (int i = 0; i < tactile::kTaxels; ++i) {
    EXPECT_LE(std::abs(noisy.values[i] / clean.values[i] - 1.0), 0.02 + 1e-12);
  }
}

TEST(Tactile, QuietRenderingDependsOnlyOnForceAndCentre) {
  const auto o = find_object(default_catalog(), "ink");
  auto a = lift(with_theta(reset(o, 1), 45.0));
  auto b = lift(with_theta(reset(o, 99), 45.0));
  b.t_tick = 500;
  b.fill_g = 20.0;
  const auto fa = render_taxels(a, kQuiet);
  const auto fb = render_taxels(b, kQuiet);
  EXPECT_EQ(fa.values, fb.values);
}

TEST(Tactile, FingersMatchWithoutNoise) {
  for (double slip : {0.0, 5.0, 17.5, 39.0}) {
    auto s = lift(with_theta(reset(find_object(default_catalog(), "cup"), 1), 70.0));
    s.slip_mm = slip;
    const auto f = render_taxels(s, kQuiet);
    EXPECT_NEAR(f.finger_sum(0), f.finger_sum(1), 1e-12);
  }
}

TEST(Tactile, PressureCentreMovesTowardFingertipWithSlip) {
  auto s = lift(with_theta(reset(find_object(default_catalog(), "cup"), 1), 70.0));
  double prev = center_of_pressure_column(render_taxels(s, kQuiet));
  for (double slip = 1.0; slip <= 40.0; slip += 1.0) {
    s.slip_mm = slip;
    const double c = center_of_pressure_column(render_taxels(s, kQuiet));
    EXPECT_LT(c, prev) << slip;
    prev = c;
  }
}

TEST(Tactile, DeltaFrame) {
  TaxelFrame a, b;
  a.t_tick = 4;
  b.t_tick = 5;
  a.values.fill(2.5);
  b.values.fill(2.5);
  for (double v : delta_frame(b, a)) EXPECT_EQ(v, 0.0);
  a.values.fill(0.0);
  b.values.fill(1.0);
  for (double v : delta_frame(b, a)) EXPECT_EQ(v, 1.0);
  TaxelFrame c;
  c.t_tick = 7;
  TaxelFrame d;
  d.t_tick = 5;
  EXPECT_THROW(delta_frame(c, d), SequencingError);
}
