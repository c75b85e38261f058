#pragma once

// Physics-lite simulation of a two-finger parallel gripper holding one object.
//
// The gripper is driven by a single angle theta in [0, 90] degrees (0 = open).
// Contact is a capped linear spring, friction capacity is 2 * mu * F_n over the
// two contacts, and any load beyond capacity creeps the object along the
// fingers. The object sits on a support until lift() is called; only lifted
// objects carry load.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "tgrasp/errors.hpp"

namespace tgrasp {

namespace sim {
inline constexpr int kTickHz = 160;
inline constexpr double kDt = 1.0 / kTickHz;
inline constexpr double kThetaMin = 0.0;
inline constexpr double kThetaMax = 90.0;
inline constexpr double kOpenApertureMm = 80.0;
inline constexpr double kSlewDegPerSec = 30.0;
inline constexpr double kSlewDegPerTick = kSlewDegPerSec / kTickHz;  // 0.1875
inline constexpr double kForceCapN = 40.0;
inline constexpr double kSlipMmPerNewton = 0.5;  // per tick of overload
inline constexpr double kGravity = 9.81;
inline constexpr double kVibrationHz = 8.0;
inline constexpr double kFingerLenMm = 40.0;
// |d aperture / d theta| in mm per degree.
inline constexpr double kApertureGain = kOpenApertureMm / kThetaMax;
}  // namespace sim

struct ObjectSpec {
  std::string name;
  double mass_g = 0.0;
  double width_mm = 0.0;
  double stiffness_n_per_mm = 0.0;
  double mu = 0.0;
  double max_fill_g = 0.0;

  void validate() const {
    if (name.empty()) throw ValidationError("name", "must not be empty");
    if (!(mass_g > 0.0) || !std::isfinite(mass_g)) throw ValidationError("mass_g", "must be > 0");
    if (!(width_mm > 0.0) || !std::isfinite(width_mm)) throw ValidationError("width_mm", "must be > 0");
    if (!(stiffness_n_per_mm > 0.0) || !std::isfinite(stiffness_n_per_mm)) {
      throw ValidationError("stiffness_n_per_mm", "must be > 0");
    }
    if (!(mu > 0.0 && mu <= 2.0)) throw ValidationError("mu", "must lie in (0, 2]");
    if (!(max_fill_g >= 0.0) || !std::isfinite(max_fill_g)) {
      throw ValidationError("max_fill_g", "must be >= 0");
    }
  }

  bool operator==(const ObjectSpec&) const = default;
};

struct GripperState {
  double theta_deg = 0.0;
  double target_deg = 0.0;
  double aperture_mm = sim::kOpenApertureMm;
  double normal_force_n = 0.0;
  double finger_len_mm = sim::kFingerLenMm;

  bool operator==(const GripperState&) const = default;
};

enum class DisturbanceKind { pull, vibration, water };

inline std::string_view to_string(DisturbanceKind kind) {
  switch (kind) {
    case DisturbanceKind::pull: return "pull";
    case DisturbanceKind::vibration: return "vibration";
    case DisturbanceKind::water: return "water";
  }
  return "?";
}

inline DisturbanceKind disturbance_kind_from_string(std::string_view s) {
  if (s == "pull") return DisturbanceKind::pull;
  if (s == "vibration") return DisturbanceKind::vibration;
  if (s == "water") return DisturbanceKind::water;
  throw ValidationError("kind", "unknown disturbance '" + std::string(s) + "'");
}

struct DisturbanceEvent {
  DisturbanceKind kind = DisturbanceKind::pull;
  double magnitude = 0.0;
  double duration_s = 0.0;

  void validate() const {
    if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) throw ValidationError("magnitude", "must be >= 0");
    if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw ValidationError("duration_s", "must be > 0");
  }

  std::int64_t duration_ticks() const {
    return static_cast<std::int64_t>(std::ceil(duration_s * sim::kTickHz - 1e-9));
  }

  bool operator==(const DisturbanceEvent&) const = default;
};

struct ActiveDisturbance {
  DisturbanceEvent event;
  std::int64_t start_tick = 0;
  std::int64_t remaining_ticks = 0;

  bool operator==(const ActiveDisturbance&) const = default;
};

// Position (m) followed by a unit quaternion (w, x, y, z).
using Pose = std::array<double, 7>;

inline constexpr Pose kTopGraspPose{0.0, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0};

struct SimState {
  std::int64_t t_tick = 0;
  GripperState gripper;
  ObjectSpec object;
  double fill_g = 0.0;
  double slip_mm = 0.0;
  bool dropped = false;
  bool lifted = false;
  Pose end_effector_pose = kTopGraspPose;
  std::uint64_t rng_seed = 0;
  std::vector<ActiveDisturbance> active;
  // Tangential load and friction capacity evaluated during the last step.
  double load_n = 0.0;
  double capacity_n = 0.0;

  bool operator==(const SimState&) const = default;
};

inline double aperture_for_theta(double theta_deg) {
  return sim::kOpenApertureMm * (1.0 - theta_deg / sim::kThetaMax);
}

inline double theta_for_aperture(double aperture_mm) {
  return sim::kThetaMax * (1.0 - aperture_mm / sim::kOpenApertureMm);
}

inline double normal_force(const ObjectSpec& object, double theta_deg) {
  const double penetration = std::max(0.0, object.width_mm - aperture_for_theta(theta_deg));
  return std::min(sim::kForceCapN, object.stiffness_n_per_mm * penetration);
}

inline double object_weight_n(const ObjectSpec& object, double fill_g) {
  return (object.mass_g + fill_g) * sim::kGravity / 1000.0;
}

inline double friction_capacity(const ObjectSpec& object, double normal_force_n) {
  return 2.0 * object.mu * normal_force_n;
}

// Smallest angle whose friction capacity reaches `capacity_n`. Throws when the
// force cap makes it unreachable.
inline double theta_for_capacity(const ObjectSpec& object, double capacity_n) {
  const double force = capacity_n / (2.0 * object.mu);
  if (force > sim::kForceCapN) {
    throw GenerationError("capacity " + std::to_string(capacity_n) + " N exceeds force cap for " +
                          object.name);
  }
  const double penetration = force / object.stiffness_n_per_mm;
  const double theta = theta_for_aperture(object.width_mm - penetration);
  if (theta > sim::kThetaMax) {
    throw GenerationError("capacity " + std::to_string(capacity_n) + " N needs theta > 90 for " +
                          object.name);
  }
  return std::max(theta, sim::kThetaMin);
}

// Places the gripper at `theta_deg` with a matching command; mostly for tests
// and for restoring snapshots.
inline SimState with_theta(SimState state, double theta_deg) {
  theta_deg = std::clamp(theta_deg, sim::kThetaMin, sim::kThetaMax);
  state.gripper.theta_deg = theta_deg;
  state.gripper.target_deg = theta_deg;
  state.gripper.aperture_mm = aperture_for_theta(theta_deg);
  state.gripper.normal_force_n = normal_force(state.object, theta_deg);
  return state;
}

inline SimState reset(const ObjectSpec& object, std::uint64_t seed) {
  object.validate();
  SimState state;
  state.object = object;
  state.rng_seed = seed;
  state.end_effector_pose = kTopGraspPose;
  return with_theta(std::move(state), 0.0);
}

inline SimState set_target_angle(SimState state, double theta_deg) {
  if (std::isnan(theta_deg)) throw ValidationError("theta_deg", "is NaN");
  state.gripper.target_deg = std::clamp(theta_deg, sim::kThetaMin, sim::kThetaMax);
  return state;
}

// The support under the object is removed; from now on the object's weight
// and any disturbance forces load the contacts.
inline SimState lift(SimState state) {
  state.lifted = true;
  return state;
}

inline SimState inject_disturbance(SimState state, const DisturbanceEvent& event) {
  if (state.dropped) throw EpisodeOverError("object already dropped at tick " + std::to_string(state.t_tick));
  event.validate();
  state.active.push_back({event, state.t_tick, event.duration_ticks()});
  return state;
}

inline SimState step(SimState state) {
  const std::int64_t tick = state.t_tick;
  state.t_tick += 1;
  if (state.dropped) return state;

  auto& g = state.gripper;
  const double delta = std::clamp(g.target_deg - g.theta_deg, -sim::kSlewDegPerTick, sim::kSlewDegPerTick);
  g.theta_deg = (std::abs(g.target_deg - g.theta_deg) <= sim::kSlewDegPerTick) ? g.target_deg : g.theta_deg + delta;
  g.aperture_mm = aperture_for_theta(g.theta_deg);
  g.normal_force_n = normal_force(state.object, g.theta_deg);

  double pull_n = 0.0;
  double vibration_n = 0.0;
  for (auto& ev : state.active) {
    if (ev.remaining_ticks <= 0) continue;
    switch (ev.event.kind) {
      case DisturbanceKind::pull:
        pull_n += ev.event.magnitude;
        break;
      case DisturbanceKind::vibration: {
        const double t = static_cast<double>(tick) * sim::kDt;
        vibration_n += ev.event.magnitude * std::sin(2.0 * std::numbers::pi * sim::kVibrationHz * t);
        break;
      }
      case DisturbanceKind::water:
        state.fill_g = std::min(state.object.max_fill_g, state.fill_g + ev.event.magnitude / sim::kTickHz);
        break;
    }
    ev.remaining_ticks -= 1;
  }
  std::erase_if(state.active, [](const ActiveDisturbance& ev) { return ev.remaining_ticks <= 0; });

  const double load = state.lifted ? object_weight_n(state.object, state.fill_g) + pull_n + vibration_n : 0.0;
  const double capacity = friction_capacity(state.object, g.normal_force_n);
  state.load_n = load;
  state.capacity_n = capacity;

  if (g.normal_force_n > 0.0 && load > capacity) {
    state.slip_mm += sim::kSlipMmPerNewton * (load - capacity);
  }
  if ((g.normal_force_n == 0.0 && load > 0.0) || state.slip_mm > g.finger_len_mm) {
    state.dropped = true;
  }
  return state;
}

struct ContactState {
  double normal_force_n = 0.0;
  double contact_center = 0.5;  // fraction along the finger, 0 = fingertip
  bool in_contact = false;
};

inline ContactState contact_state(const SimState& state) {
  ContactState c;
  c.normal_force_n = state.dropped ? 0.0 : state.gripper.normal_force_n;
  c.contact_center = std::clamp(0.5 - state.slip_mm / state.gripper.finger_len_mm * 0.5, 0.0, 1.0);
  c.in_contact = c.normal_force_n > 0.0;
  return c;
}

}  // namespace tgrasp
