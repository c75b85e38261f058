#pragma once

// Closed-loop grasping: generator picks the initial angle, the estimator gates
// the adapter, the adapter corrects.

#include <cstdint>
#include <deque>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tgrasp/adapter.hpp"
#include "tgrasp/errors.hpp"
#include "tgrasp/expert.hpp"
#include "tgrasp/generator.hpp"
#include "tgrasp/sim.hpp"
#include "tgrasp/stability.hpp"
#include "tgrasp/tactile.hpp"

namespace tgrasp {

// Disturbance fired `at_tick` ticks after the lift.
struct ScheduledDisturbance {
  std::int64_t at_tick = 0;
  DisturbanceEvent event;
};

struct ClosedLoopConfig {
  std::int64_t max_ticks = 1600;  // after the lift
  int decision_ticks = expert::kDecisionTicks;
  int settle_ticks = expert::kSettleTicks;
  std::optional<double> initial_target_deg;  // overrides the generator
  TactileOptions tactile;
};

struct TraceRow {
  std::int64_t tick = 0;
  double theta_deg = 0.0;
  double target_deg = 0.0;
  double force_n = 0.0;  // per finger
  double log_likelihood = 0.0;
  bool stable = true;
  bool dropped = false;
};

struct EpisodeResult {
  bool dropped = false;
  std::int64_t ticks_survived = 0;  // ticks after the lift
  double initial_target_deg = 0.0;
  std::size_t adaptations = 0;
  double final_fill_g = 0.0;
  std::vector<TraceRow> trace;

  std::vector<double> theta_trace() const {
    std::vector<double> out;
    for (const auto& r : trace) out.push_back(r.theta_deg);
    return out;
  }
  std::vector<double> likelihood_trace() const {
    std::vector<double> out;
    for (const auto& r : trace) out.push_back(r.log_likelihood);
    return out;
  }

  std::string trace_text() const {
    std::ostringstream os;
    os << std::setprecision(9);
    os << "tick\ttheta_deg\ttarget_deg\tforce_n\tlog_likelihood\tstable\tdropped\n";
    for (const auto& r : trace) {
      os << r.tick << '\t' << r.theta_deg << '\t' << r.target_deg << '\t' << r.force_n << '\t' << r.log_likelihood
         << '\t' << (r.stable ? 1 : 0) << '\t' << (r.dropped ? 1 : 0) << '\n';
    }
    return os.str();
  }

  void write_trace(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write trace file " + path);
    out << trace_text();
  }
};

/// Runs one episode from a freshly reset state. `adapter` may be null, which
/// is the no-adaptation arm; the estimator is still evaluated for the trace.
inline EpisodeResult run_closed_loop(SimState state, const GeneratorModel* generator,
                                     const StabilityEstimator& estimator, const AdapterModel* adapter,
                                     std::vector<ScheduledDisturbance> schedule, const ClosedLoopConfig& cfg = {}) {
  if (!generator && !cfg.initial_target_deg) throw ContractError("closed loop needs a generator or an initial angle");
  if (adapter) adapter->require_trained();
  estimator.gmm.validate();
  std::stable_sort(schedule.begin(), schedule.end(),
                   [](const auto& a, const auto& b) { return a.at_tick < b.at_tick; });

  EpisodeResult res;
  EpisodeRecorder rec(std::move(state), cfg.tactile);
  if (!close_to_contact(rec)) throw GenerationError(rec.state().object.name + ": gripper closed without contact");

  double target = 0.0;
  if (cfg.initial_target_deg) {
    target = *cfg.initial_target_deg;
  } else {
    try {
      target = predict_initial_grasp(*generator, rec.last_frame().values, rec.state().gripper.theta_deg);
    } catch (const Error& e) {
      throw ModelError(std::string("generator failed at tick ") + std::to_string(rec.state().t_tick) + ": " + e.what());
    }
  }
  target = std::clamp(std::max(target, rec.state().gripper.theta_deg), sim::kThetaMin, sim::kThetaMax);
  res.initial_target_deg = target;
  rec.state() = set_target_angle(std::move(rec.state()), target);

  std::deque<HistoryEntry> history;
  const auto remember = [&] {
    history.push_back({rec.last_frame(), rec.state().gripper.theta_deg});
    if (history.size() > adapter::kWindow) history.pop_front();
  };
  remember();
  int settle = 0;
  const int settle_limit = static_cast<int>(sim::kThetaMax / sim::kSlewDegPerTick) + cfg.settle_ticks + 8;
  for (int i = 0; settle < cfg.settle_ticks && i < settle_limit; ++i) {
    rec.step();
    remember();
    if (rec.state().gripper.theta_deg == target) ++settle;
  }
  rec.state() = lift(std::move(rec.state()));

  std::size_t next = 0;
  for (std::int64_t i = 0; i < cfg.max_ticks; ++i) {
    while (next < schedule.size() && schedule[next].at_tick <= i) {
      rec.state() = inject_disturbance(std::move(rec.state()), schedule[next].event);
      ++next;
    }
    rec.step();
    remember();
    const auto& s = rec.state();

    TraceRow row;
    row.tick = s.t_tick;
    row.theta_deg = s.gripper.theta_deg;
    row.force_n = contact_state(s).normal_force_n;
    row.dropped = s.dropped;
    const auto feature = GraspFeature::pack(rec.last_frame().values, s.gripper.theta_deg, s.end_effector_pose);
    row.log_likelihood = gmm_log_likelihood(estimator.gmm, feature.x);
    row.stable = gmm_likelihood(estimator.gmm, feature.x) > estimator.te;

    if (s.dropped) {
      row.target_deg = s.gripper.target_deg;
      res.trace.push_back(row);
      res.dropped = true;
      res.ticks_survived = i;
      res.final_fill_g = s.fill_g;
      return res;
    }
    if (adapter && (i + 1) % cfg.decision_ticks == 0 && !row.stable) {
      const std::vector<HistoryEntry> h(history.begin(), history.end());
      double dtheta = 0.0;
      try {
        dtheta = predict_delta_theta(*adapter, build_window_features(h));
      } catch (const ModelError& e) {
        throw ModelError("adapter failed at tick " + std::to_string(s.t_tick) + ": " + e.what());
      }
      if (dtheta != 0.0) {
        rec.state() = set_target_angle(std::move(rec.state()), corrected_target(rec.state(), dtheta));
        ++res.adaptations;
      }
    }
    row.target_deg = rec.state().gripper.target_deg;
    res.trace.push_back(row);
  }
  res.ticks_survived = cfg.max_ticks;
  res.final_fill_g = rec.state().fill_g;
  return res;
}

// ---------------------------------------------------------------------------
// Supported-weight benchmark.

namespace bench {
inline constexpr std::int64_t kEpisodeTicks = 10 * sim::kTickHz;
inline constexpr std::int64_t kFillStartTick = sim::kTickHz;  // 1 s after the lift
inline constexpr double kFillDurationS = 4.0;
}  // namespace bench

// Water schedule adding exactly `fill_g` grams between 1 s and 5 s after the lift.
inline std::vector<ScheduledDisturbance> water_fill_schedule(double fill_g) {
  if (fill_g <= 0.0) return {};
  return {{bench::kFillStartTick, {DisturbanceKind::water, fill_g / bench::kFillDurationS, bench::kFillDurationS}}};
}

struct BenchModels {
  const GeneratorModel* generator = nullptr;
  const StabilityEstimator* estimator = nullptr;
  const AdapterModel* adapter = nullptr;  // null: no adaptation
  std::optional<double> initial_target_deg;
};

inline bool survives_fill(const ObjectSpec& object, double fill_g, const BenchModels& m, std::uint64_t seed) {
  if (!m.estimator) throw ContractError("bench needs a stability estimator");
  ClosedLoopConfig cfg;
  cfg.max_ticks = bench::kEpisodeTicks;
  cfg.initial_target_deg = m.initial_target_deg;
  const auto r = run_closed_loop(reset(object, seed), m.generator, *m.estimator, m.adapter, water_fill_schedule(fill_g), cfg);
  return !r.dropped;
}

struct BenchResult {
  std::string object;
  int max_grams = -1;  // -1: even the empty object drops
  int evaluations = 0;
};

/// Largest whole-gram fill in [0, max_fill_g] that survives the standard
/// episode, by bisection.
inline BenchResult bench_max_weight(const ObjectSpec& object, const BenchModels& m, std::uint64_t seed) {
  BenchResult r;
  r.object = object.name;
  const int hi_limit = static_cast<int>(std::floor(object.max_fill_g));
  const auto ok = [&](int g) {
    ++r.evaluations;
    return survives_fill(object, static_cast<double>(g), m, seed);
  };
  if (!ok(0)) return r;
  if (ok(hi_limit)) {
    r.max_grams = hi_limit;
    return r;
  }
  int lo = 0, hi = hi_limit;  // ok(lo), !ok(hi)
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    (ok(mid) ? lo : hi) = mid;
  }
  r.max_grams = lo;
  return r;
}

}  // namespace tgrasp
