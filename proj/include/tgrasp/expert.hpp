#pragma once

// Scripted demonstrator. It has privileged access to the simulator's load and
// capacity and stands in for the human operator when generating datasets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgrasp/dataset.hpp"
#include "tgrasp/errors.hpp"
#include "tgrasp/rng.hpp"
#include "tgrasp/sim.hpp"
#include "tgrasp/tactile.hpp"

namespace tgrasp {

enum class Scenario { gp, stab_pos, stab_neg, ga };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::gp: return "gp";
    case Scenario::stab_pos: return "stab_pos";
    case Scenario::stab_neg: return "stab_neg";
    case Scenario::ga: return "ga";
  }
  return "?";
}

inline Scenario scenario_from_string(std::string_view s) {
  if (s == "gp") return Scenario::gp;
  if (s == "stab_pos") return Scenario::stab_pos;
  if (s == "stab_neg") return Scenario::stab_neg;
  if (s == "ga") return Scenario::ga;
  throw ValidationError("scenario", "unknown scenario '" + std::string(s) + "'");
}

inline DatasetKind dataset_kind(Scenario s) {
  switch (s) {
    case Scenario::gp: return DatasetKind::gp;
    case Scenario::stab_pos:
    case Scenario::stab_neg: return DatasetKind::stab;
    case Scenario::ga: return DatasetKind::ga;
  }
  return DatasetKind::gp;
}

namespace expert {
inline constexpr double kInitialMargin = 1.5;    // capacity / weight after the initial grasp
inline constexpr double kGain = 1.2;             // proportional correction gain
inline constexpr double kMaxDeltaDeg = 5.0;
inline constexpr int kDecisionTicks = 8;         // 20 Hz decisions at 160 Hz
inline constexpr int kOverloadTicks = 16;        // slip is judged over the adapter's window
inline constexpr int kSettleTicks = 16;
inline constexpr int kGpHoldTicks = 32;
inline constexpr int kStabHoldTicks = 160;
inline constexpr int kGaTicks = 960;
inline constexpr int kDisturbanceSegmentTicks = 960;  // 3-6 random events per segment
inline constexpr int kMaxNegTicks = 4000;
}  // namespace expert

// Angle change that restores capacity to k_p times the overload; zero while
// the grasp holds.
inline double expert_delta_theta(const ObjectSpec& object, double overload_n) {
  const double overload = std::max(0.0, overload_n);
  if (overload == 0.0) return 0.0;
  const double dcap_dtheta = 2.0 * object.mu * object.stiffness_n_per_mm * sim::kApertureGain;
  return std::clamp(expert::kGain * overload / dcap_dtheta, -expert::kMaxDeltaDeg, expert::kMaxDeltaDeg);
}

inline double expert_delta_theta(const SimState& s) { return expert_delta_theta(s.object, s.load_n - s.capacity_n); }

// Mean slip-producing overload over the last `ticks` ticks, read back from the
// slip it caused.
inline double interval_overload(double slip_now_mm, double slip_before_mm, int ticks) {
  return (slip_now_mm - slip_before_mm) / (sim::kSlipMmPerNewton * ticks);
}

// Angle giving capacity = margin * unloaded weight, nudged up so the margin
// holds after rounding.
inline double expert_grasp_angle(const ObjectSpec& object, double margin = expert::kInitialMargin) {
  const double cap = margin * object_weight_n(object, 0.0);
  const double theta = theta_for_capacity(object, cap);
  return std::min(sim::kThetaMax, theta + 1e-9);
}

// New command after a correction: theta + dtheta from the measured angle, never
// undoing a closing command that is still being slewed toward.
inline double corrected_target(const SimState& s, double dtheta_deg) {
  const double next = std::clamp(s.gripper.theta_deg + dtheta_deg, sim::kThetaMin, sim::kThetaMax);
  return dtheta_deg > 0.0 ? std::max(next, s.gripper.target_deg) : next;
}

/// Steps a simulator while rendering every tick, so each frame's dS is the
/// difference to the immediately preceding tick.
class EpisodeRecorder {
 public:
  EpisodeRecorder(SimState state, TactileOptions opts) : state_(std::move(state)), opts_(opts) {
    last_ = render_taxels(state_, opts_);
  }

  SimState& state() noexcept { return state_; }
  const SimState& state() const noexcept { return state_; }
  const TaxelFrame& last_frame() const noexcept { return last_; }
  const TaxelFrame& previous_frame() const noexcept { return prev_; }

  // Advances one tick and renders the new reading.
  void step() {
    state_ = tgrasp::step(std::move(state_));
    prev_ = last_;
    last_ = render_taxels(state_, opts_);
  }

  Frame frame(double dtheta_deg, FrameLabel label) const {
    Frame f;
    f.t_tick = last_.t_tick;
    f.S = last_.values;
    f.theta_deg = state_.gripper.theta_deg;
    f.P = state_.end_effector_pose;
    f.dS = delta_frame(last_, prev_);
    f.dtheta_deg = dtheta_deg;
    f.label = label;
    return f;
  }

 private:
  SimState state_;
  TactileOptions opts_;
  TaxelFrame last_;
  TaxelFrame prev_;
};

// Closes at full slew until the fingers touch the object. Returns false if
// the gripper closes completely without contact.
inline bool close_to_contact(EpisodeRecorder& rec) {
  rec.state() = set_target_angle(std::move(rec.state()), sim::kThetaMax);
  const int limit = static_cast<int>(sim::kThetaMax / sim::kSlewDegPerTick) + 8;
  for (int i = 0; i < limit; ++i) {
    rec.step();
    if (contact_state(rec.state()).in_contact) {
      rec.state() = set_target_angle(std::move(rec.state()), rec.state().gripper.theta_deg);
      return true;
    }
  }
  return false;
}

struct ExpertOptions {
  TactileOptions tactile;
};

namespace detail {

inline void append_disturbances(std::vector<std::pair<std::int64_t, DisturbanceEvent>>& schedule,
                                const ObjectSpec& object, Rng& rng, int horizon) {
  const double w0 = object_weight_n(object, 0.0);
  const int segments = std::max(1, horizon / expert::kDisturbanceSegmentTicks);
  const int seg_len = horizon / segments;
  for (int seg = 0; seg < segments; ++seg) {
    const int n_events = 3 + static_cast<int>(rng.index(4));
    for (int i = 0; i < n_events; ++i) {
      const auto at = static_cast<std::int64_t>(seg) * seg_len +
                      static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(seg_len * 3 / 4)));
      DisturbanceEvent ev;
      switch (rng.index(3)) {
        case 0:
          ev = {DisturbanceKind::water, rng.uniform(10.0, 60.0), rng.uniform(0.5, 3.0)};
          break;
        case 1:
          ev = {DisturbanceKind::pull, rng.uniform(0.3, 2.0) * w0, rng.uniform(0.3, 1.5)};
          break;
        default:
          ev = {DisturbanceKind::vibration, rng.uniform(0.3, 2.0) * w0, rng.uniform(0.3, 1.0)};
          break;
      }
      schedule.emplace_back(at, ev);
    }
  }
  std::stable_sort(schedule.begin(), schedule.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
}

}  // namespace detail

/// One scripted demonstration.
///
///  gp       close to first contact, command the angle giving a 1.5x capacity
///           margin, settle and lift; dtheta = target - theta on every frame.
///  stab_pos as gp with a longer hold; held frames are labelled stable.
///  stab_neg either an insufficient grasp or an overloading pull; frames after
///           slip onset are unstable and the final one dropped.
///  ga       1.5x grasp under a random disturbance schedule with proportional
///           corrections every 8 ticks; dtheta is the correction for the
///           mean overload over the trailing 16 ticks.
inline EpisodeRecord scripted_expert_episode(const ObjectSpec& object, Scenario scenario, std::uint64_t seed,
                                             const ExpertOptions& opts = {}) {
  object.validate();
  Rng rng(hash_combine(seed, static_cast<std::uint64_t>(scenario) + 0x5EEDULL));
  EpisodeRecord out;
  out.header.kind = dataset_kind(scenario);
  out.header.object_name = object.name;
  out.header.seed = seed;

  EpisodeRecorder rec(reset(object, seed), opts.tactile);
  if (!close_to_contact(rec)) throw GenerationError(object.name + ": gripper closed without contact");

  double target = 0.0;
  bool overload_pull = false;
  try {
    if (scenario == Scenario::stab_neg) {
      overload_pull = rng.index(2) == 1;
      target = overload_pull ? expert_grasp_angle(object) : expert_grasp_angle(object, rng.uniform(0.3, 0.85));
    } else {
      target = expert_grasp_angle(object);
    }
  } catch (const GenerationError&) {
    throw GenerationError(std::string(to_string(scenario)) + " impossible for " + object.name +
                          ": required capacity exceeds the force cap");
  }
  target = std::max(target, rec.state().gripper.theta_deg);
  rec.state() = set_target_angle(std::move(rec.state()), target);

  const auto record_closing = [&](FrameLabel label) {
    const double dtheta = scenario == Scenario::gp ? target - rec.state().gripper.theta_deg : 0.0;
    out.frames.push_back(rec.frame(dtheta, label));
  };

  // Contact frame, then close and settle on the support.
  record_closing(FrameLabel::na);
  int settle = 0;
  while (settle < expert::kSettleTicks) {
    rec.step();
    record_closing(FrameLabel::na);
    if (rec.state().gripper.theta_deg == target) ++settle;
  }
  rec.state() = lift(std::move(rec.state()));

  switch (scenario) {
    case Scenario::gp: {
      for (int i = 0; i < expert::kGpHoldTicks; ++i) {
        rec.step();
        record_closing(FrameLabel::stable);
      }
      break;
    }
    case Scenario::stab_pos: {
      for (int i = 0; i < expert::kStabHoldTicks; ++i) {
        rec.step();
        out.frames.push_back(rec.frame(0.0, rec.state().slip_mm > 0.0 ? FrameLabel::unstable : FrameLabel::stable));
      }
      break;
    }
    case Scenario::stab_neg: {
      if (overload_pull) {
        const double w0 = object_weight_n(object, 0.0);
        rec.state() = inject_disturbance(std::move(rec.state()),
                                         {DisturbanceKind::pull, rng.uniform(0.7, 1.5) * w0, 60.0});
      }
      for (int i = 0; i < expert::kMaxNegTicks && !rec.state().dropped; ++i) {
        rec.step();
        FrameLabel label = FrameLabel::stable;
        if (rec.state().dropped) label = FrameLabel::dropped;
        else if (rec.state().slip_mm > 0.0) label = FrameLabel::unstable;
        out.frames.push_back(rec.frame(0.0, label));
      }
      if (!rec.state().dropped) throw GenerationError("stab_neg episode for " + object.name + " never dropped");
      break;
    }
    case Scenario::ga: {
      std::vector<std::pair<std::int64_t, DisturbanceEvent>> schedule;
      detail::append_disturbances(schedule, object, rng, expert::kGaTicks);
      std::size_t next = 0;
      std::vector<double> slip_hist(expert::kOverloadTicks, rec.state().slip_mm);  // ring of past slip
      for (int i = 0; i < expert::kGaTicks && !rec.state().dropped; ++i) {
        while (next < schedule.size() && schedule[next].first <= i) {
          rec.state() = inject_disturbance(std::move(rec.state()), schedule[next].second);
          ++next;
        }
        rec.step();
        const auto slot = static_cast<std::size_t>(i % expert::kOverloadTicks);
        const double overload = interval_overload(rec.state().slip_mm, slip_hist[slot], expert::kOverloadTicks);
        slip_hist[slot] = rec.state().slip_mm;
        const double dtheta = expert_delta_theta(object, overload);
        FrameLabel label = rec.state().dropped                 ? FrameLabel::dropped
                           : rec.state().load_n > rec.state().capacity_n ? FrameLabel::unstable
                                                                          : FrameLabel::stable;
        out.frames.push_back(rec.frame(dtheta, label));
        if ((i + 1) % expert::kDecisionTicks == 0 && dtheta != 0.0) {
          rec.state() = set_target_angle(std::move(rec.state()), corrected_target(rec.state(), dtheta));
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace tgrasp
