#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "tgrasp/errors.hpp"
#include "tgrasp/rng.hpp"
#include "tgrasp/sim.hpp"

namespace tgrasp {

namespace tactile {
inline constexpr int kGridSide = 4;
inline constexpr int kTaxelsPerFinger = kGridSide * kGridSide;
inline constexpr int kTaxels = 2 * kTaxelsPerFinger;
inline constexpr double kGainPerNewton = 10.0;
inline constexpr double kFootprintSigma = 1.0;  // in taxel pitches
inline constexpr double kNoiseAmplitude = 0.02;
}  // namespace tactile

using TaxelArray = std::array<double, tactile::kTaxels>;

// One 32-taxel reading: finger A at [0, 16), finger B at [16, 32), each a
// row-major 4x4 grid whose columns run from fingertip (0) to palm (3).
struct TaxelFrame {
  TaxelArray values{};
  std::int64_t t_tick = 0;

  double finger_sum(int finger) const {
    double s = 0.0;
    for (int i = 0; i < tactile::kTaxelsPerFinger; ++i) s += values[finger * tactile::kTaxelsPerFinger + i];
    return s;
  }

  bool operator==(const TaxelFrame&) const = default;
};

struct TactileOptions {
  bool noise = true;
};

// Normalized 4x4 footprint for a contact centred at `contact_center` along the
// finger; sums to 1.
inline std::array<double, tactile::kTaxelsPerFinger> footprint(double contact_center) {
  std::array<double, tactile::kTaxelsPerFinger> w{};
  const double cx = contact_center * (tactile::kGridSide - 1);
  const double cy = 0.5 * (tactile::kGridSide - 1);
  const double inv2s2 = 1.0 / (2.0 * tactile::kFootprintSigma * tactile::kFootprintSigma);
  double total = 0.0;
  for (int r = 0; r < tactile::kGridSide; ++r) {
    for (int c = 0; c < tactile::kGridSide; ++c) {
      const double dx = c - cx;
      const double dy = r - cy;
      const double v = std::exp(-(dx * dx + dy * dy) * inv2s2);
      w[r * tactile::kGridSide + c] = v;
      total += v;
    }
  }
  for (auto& v : w) v /= total;
  return w;
}

// Noise draws are keyed by (seed, tick, taxel) so that rendering is a pure
// function of its inputs.
inline double taxel_noise(std::uint64_t seed, std::int64_t tick, int taxel) {
  const std::uint64_t key = hash_combine(hash_combine(seed, static_cast<std::uint64_t>(tick)),
                                         static_cast<std::uint64_t>(taxel));
  return (2.0 * unit_double(key) - 1.0) * tactile::kNoiseAmplitude;
}

inline TaxelFrame render_taxels(double normal_force_n, double contact_center, std::int64_t tick,
                                std::uint64_t seed, const TactileOptions& opts = {}) {
  TaxelFrame frame;
  frame.t_tick = tick;
  if (!(normal_force_n > 0.0)) return frame;
  const auto w = footprint(contact_center);
  const double total = tactile::kGainPerNewton * normal_force_n;
  for (int f = 0; f < 2; ++f) {
    for (int i = 0; i < tactile::kTaxelsPerFinger; ++i) {
      const int idx = f * tactile::kTaxelsPerFinger + i;
      double v = total * w[i];
      if (opts.noise) v *= 1.0 + taxel_noise(seed, tick, idx);
      frame.values[idx] = v;
    }
  }
  return frame;
}

inline TaxelFrame render_taxels(const SimState& state, const TactileOptions& opts = {}) {
  const auto c = contact_state(state);
  return render_taxels(c.normal_force_n, c.contact_center, state.t_tick, state.rng_seed, opts);
}

inline TaxelArray delta_frame(const TaxelFrame& curr, const TaxelFrame& prev) {
  if (curr.t_tick != prev.t_tick + 1) {
    throw SequencingError("delta_frame needs consecutive ticks, got " + std::to_string(prev.t_tick) + " -> " +
                          std::to_string(curr.t_tick));
  }
  TaxelArray d{};
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = curr.values[i] - prev.values[i];
  return d;
}

// Intensity-weighted mean column of finger A, or NaN without contact.
inline double center_of_pressure_column(const TaxelFrame& frame) {
  double num = 0.0;
  double den = 0.0;
  for (int r = 0; r < tactile::kGridSide; ++r) {
    for (int c = 0; c < tactile::kGridSide; ++c) {
      const double v = frame.values[r * tactile::kGridSide + c];
      num += v * c;
      den += v;
    }
  }
  return den > 0.0 ? num / den : std::nan("");
}

}  // namespace tgrasp
