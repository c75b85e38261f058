#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tgrasp/closed_loop.hpp"
#include "tgrasp/objects.hpp"

using namespace tgrasp;

namespace {

// Far from every real feature the density underflows to 0, so te < 0 judges
// every tick stable and a huge te none.
StabilityEstimator flat_estimator(double te) {
  return {GmmModel::from_parameters({1.0}, {Vec(kFeatureDim, 0.0)}, {Matrix::identity(kFeatureDim)}), te};
}

// Adapter whose output is the constant `dtheta` for every window.
AdapterModel constant_adapter(double dtheta) {
  Rng rng(1);
  auto m = AdapterModel::initialized({}, rng);
  m.head().back().w.fill(0.0);
  m.head().back().b.fill(dtheta);
  return m;
}

ClosedLoopConfig fixed_grasp(const ObjectSpec& o, std::int64_t ticks = 1600) {
  ClosedLoopConfig cfg;
  cfg.max_ticks = ticks;
  cfg.initial_target_deg = expert_grasp_angle(o);
  return cfg;
}

// Plain simulator rollout of the same protocol: close to contact, command the
// angle, settle, lift, then run the schedule. Returns ticks after the lift
// before the drop, or -1.
std::int64_t sim_drop_tick(const ObjectSpec& o, std::uint64_t seed, double target,
                           const std::vector<ScheduledDisturbance>& schedule, std::int64_t ticks) {
  auto s = set_target_angle(reset(o, seed), 90.0);
  while (!contact_state(s).in_contact) s = step(std::move(s));
  s = set_target_angle(std::move(s), std::max(target, s.gripper.theta_deg));
  for (int settled = 0; settled < expert::kSettleTicks;) {
    s = step(std::move(s));
    if (s.gripper.theta_deg == s.gripper.target_deg) ++settled;
  }
  s = lift(std::move(s));
  std::size_t next = 0;
  for (std::int64_t i = 0; i < ticks; ++i) {
    while (next < schedule.size() && schedule[next].at_tick <= i) s = inject_disturbance(s, schedule[next++].event);
    s = step(std::move(s));
    if (s.dropped) return i;
  }
  return -1;
}

}  // namespace

TEST(ClosedLoop, QuietEpisodeHoldsConstantAngle) {
  const auto est = flat_estimator(0.0);
  for (const auto& o : test_objects()) {
    const auto r = run_closed_loop(reset(o, 1), nullptr, est, nullptr, {}, fixed_grasp(o));
    EXPECT_FALSE(r.dropped) << o.name;
    EXPECT_EQ(r.ticks_survived, 1600);
    for (const auto& row : r.trace) ASSERT_EQ(row.theta_deg, r.trace.front().theta_deg) << o.name;
    const double cap = friction_capacity(o, normal_force(o, r.trace.front().theta_deg));
    EXPECT_GT(cap, object_weight_n(o, 0.0));
  }
}

TEST(ClosedLoop, ZeroPolicyDropsWhereSimulatorDoes) {
  const auto est = flat_estimator(0.0);
  const auto zero = constant_adapter(0.0);
  for (const auto& o : test_objects()) {
    const auto schedule = water_fill_schedule(o.max_fill_g);
    const auto cfg = fixed_grasp(o);
    const auto r = run_closed_loop(reset(o, 2), nullptr, est, &zero, schedule, cfg);
    const auto expect = sim_drop_tick(o, 2, *cfg.initial_target_deg, schedule, cfg.max_ticks);
    ASSERT_GE(expect, 0) << o.name;
    EXPECT_TRUE(r.dropped) << o.name;
    EXPECT_EQ(r.ticks_survived, expect) << o.name;
    EXPECT_EQ(r.adaptations, 0u);
  }
}

TEST(ClosedLoop, AdapterOnlyActsWhenJudgedUnstable) {
  const auto o = find_object(default_catalog(), "cup");
  const auto closing = constant_adapter(1.0);
  const auto schedule = water_fill_schedule(50.0);
  const auto always_stable = run_closed_loop(reset(o, 3), nullptr, flat_estimator(-1.0), &closing, schedule, fixed_grasp(o));
  EXPECT_EQ(always_stable.adaptations, 0u);
  const auto never_stable = run_closed_loop(reset(o, 3), nullptr, flat_estimator(1e300), &closing, schedule, fixed_grasp(o, 80));
  EXPECT_EQ(never_stable.adaptations, 10u);  // one per 8-tick decision
  EXPECT_GT(never_stable.trace.back().target_deg, always_stable.trace.back().target_deg);
}

TEST(ClosedLoop, AnglesStayInRange) {
  const auto o = find_object(default_catalog(), "ink");
  for (double d : {5.0, -5.0}) {
    const auto a = constant_adapter(d);
    const auto r = run_closed_loop(reset(o, 4), nullptr, flat_estimator(1e300), &a, {}, fixed_grasp(o));
    for (const auto& row : r.trace) {
      ASSERT_GE(row.theta_deg, 0.0);
      ASSERT_LE(row.theta_deg, 90.0);
      ASSERT_GE(row.target_deg, 0.0);
      ASSERT_LE(row.target_deg, 90.0);
    }
  }
}

TEST(ClosedLoop, EpisodesAreDeterministic) {
  const auto o = find_object(default_catalog(), "wine_bottle");
  const auto a = constant_adapter(0.5);
  const auto est = flat_estimator(1e-30);
  std::vector<ScheduledDisturbance> sched = {{40, {DisturbanceKind::vibration, 1.0, 1.0}},
                                             {100, {DisturbanceKind::water, 30.0, 2.0}}};
  const auto r1 = run_closed_loop(reset(o, 5), nullptr, est, &a, sched, fixed_grasp(o));
  const auto r2 = run_closed_loop(reset(o, 5), nullptr, est, &a, sched, fixed_grasp(o));
  EXPECT_EQ(r1.trace_text(), r2.trace_text());
  EXPECT_EQ(r1.adaptations, r2.adaptations);
}

TEST(ClosedLoop, MissingInitialGraspIsContractError) {
  const auto o = find_object(default_catalog(), "cup");
  EXPECT_THROW(run_closed_loop(reset(o, 1), nullptr, flat_estimator(0.0), nullptr, {}), ContractError);
}

TEST(Bench, WaterScheduleAddsRequestedMass) {
  EXPECT_TRUE(water_fill_schedule(0.0).empty());
  auto o = find_object(default_catalog(), "cup");
  o.max_fill_g = 1000.0;
  auto s = lift(with_theta(reset(o, 1), 90.0));
  const auto sched = water_fill_schedule(37.0);
  for (std::int64_t i = 0; i < bench::kEpisodeTicks; ++i) {
    for (const auto& d : sched)
      if (d.at_tick == i) s = inject_disturbance(s, d.event);
    s = step(std::move(s));
  }
  EXPECT_NEAR(s.fill_g, 37.0, 1e-9);
}

TEST(Bench, NoAdapterMatchesSlipLawOracle) {
  const auto est = flat_estimator(0.0);
  for (const auto& o : test_objects()) {
    const double theta = expert_grasp_angle(o);
    const double cap = friction_capacity(o, normal_force(o, theta));
    const auto r = bench_max_weight(o, {nullptr, &est, nullptr, theta}, 1);
    EXPECT_NEAR(r.max_grams, oracle::fill_limit_from_slip_law(o.mass_g, o.max_fill_g, cap), 2) << o.name;
    // With a 1.5x margin the fill can add about half the empty weight before slipping.
    EXPECT_GE(r.max_grams, std::min(o.max_fill_g, 0.5 * o.mass_g) - 2.0) << o.name;
  }
}

TEST(Bench, BisectionEqualsLinearScan) {
  const auto est = flat_estimator(0.0);
  for (const char* name : {"pill_box", "wine_bottle"}) {
    const auto o = find_object(default_catalog(), name);
    const BenchModels m{nullptr, &est, nullptr, expert_grasp_angle(o)};
    const auto r = bench_max_weight(o, m, 1);
    int scan = -1;
    for (int g = 0; g <= static_cast<int>(o.max_fill_g); ++g)
      if (survives_fill(o, g, m, 1)) scan = g;
    EXPECT_EQ(r.max_grams, scan) << name;
    EXPECT_LT(r.evaluations, 12);
  }
}

TEST(Bench, ClosingAdapterNeverDoesWorse) {
  const auto closing = constant_adapter(2.0);
  const auto est = flat_estimator(1e300);
  for (const auto& o : test_objects()) {
    const double theta = expert_grasp_angle(o);
    const auto none = bench_max_weight(o, {nullptr, &est, nullptr, theta}, 1).max_grams;
    const auto adapted = bench_max_weight(o, {nullptr, &est, &closing, theta}, 1).max_grams;
    EXPECT_GE(adapted, none) << o.name;
  }
}
