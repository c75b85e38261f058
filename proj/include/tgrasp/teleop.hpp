#pragma once

// Interactive teleoperation session: the simulator side of the WebSocket
// protocol, independent of any transport.
//
// client -> server   {type:"cmd", theta_target}
//                    {type:"disturb", kind, magnitude, duration_s}
//                    {type:"record", action:"start"|"stop", scenario}
//                    {type:"lift"}, {type:"reset"}          (session control)
// server -> client   {type:"state", t, theta, taxels[32], force_n, fill_g, dropped, stable}
//                    {type:"ack", seq[, path]}, {type:"error", reason}

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgrasp/dataset.hpp"
#include "tgrasp/errors.hpp"
#include "tgrasp/expert.hpp"
#include "tgrasp/sim.hpp"
#include "tgrasp/stability.hpp"
#include "tgrasp/tactile.hpp"

namespace tgrasp {

namespace teleop {
inline constexpr int kStateEveryTicks = sim::kTickHz / 20;  // 20 Hz stream
}

struct TeleopOptions {
  ObjectSpec object;
  std::uint64_t seed = 1;
  std::filesystem::path record_root = ".";  // files go to <root>/data/<kind>/
  const StabilityEstimator* estimator = nullptr;  // null: stability from load vs capacity
  TactileOptions tactile;
};

class TeleopSession {
 public:
  explicit TeleopSession(TeleopOptions opt) : opt_(std::move(opt)), rec_(reset(opt_.object, opt_.seed), opt_.tactile) {}

  /// Parses one client message. Valid commands are queued for the next tick
  /// and acknowledged with a sequence number; anything else yields an error
  /// reply and leaves the session untouched.
  nlohmann::json handle_message(const std::string& text) {
    using nlohmann::json;
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::exception& e) {
      return error_reply(std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
        return error_reply("message needs a string field 'type'");
      }
      const auto type = msg["type"].get<std::string>();
      Pending p;
      if (type == "cmd") {
        p.kind = Pending::Kind::cmd;
        p.theta = number(msg, "theta_target");
        if (!std::isfinite(p.theta)) return error_reply("theta_target must be finite");
      } else if (type == "disturb") {
        p.kind = Pending::Kind::disturb;
        if (!msg.contains("kind") || !msg["kind"].is_string()) return error_reply("disturb needs a string 'kind'");
        p.event.kind = disturbance_kind_from_string(msg["kind"].get<std::string>());
        p.event.magnitude = number(msg, "magnitude");
        p.event.duration_s = number(msg, "duration_s");
        p.event.validate();
      } else if (type == "record") {
        if (!msg.contains("action") || !msg["action"].is_string()) return error_reply("record needs 'action'");
        const auto action = msg["action"].get<std::string>();
        if (action == "start") {
          p.kind = Pending::Kind::record_start;
          p.scenario = msg.contains("scenario") && msg["scenario"].is_string() ? msg["scenario"].get<std::string>()
                                                                               : std::string("ga");
          scenario_from_string(p.scenario);
          if (recording_requested_) return error_reply("already recording");
          recording_requested_ = true;
        } else if (action == "stop") {
          p.kind = Pending::Kind::record_stop;
          if (!recording_requested_) return error_reply("not recording");
          recording_requested_ = false;
        } else {
          return error_reply("record action must be 'start' or 'stop'");
        }
      } else if (type == "lift") {
        p.kind = Pending::Kind::lift;
      } else if (type == "reset") {
        p.kind = Pending::Kind::reset;
        if (recording_requested_) return error_reply("stop recording before reset");
      } else {
        return error_reply("unknown message type '" + type + "'");
      }
      p.seq = ++seq_;
      const bool deferred = p.kind == Pending::Kind::record_stop;  // acked with the file path on the tick
      pending_.push_back(std::move(p));
      if (deferred) return nullptr;
      return json{{"type", "ack"}, {"seq", seq_}};
    } catch (const Error& e) {
      return error_reply(e.what());
    }
  }

  /// Applies queued commands in order, advances one tick and returns any
  /// deferred replies (record stop acks).
  std::vector<nlohmann::json> tick() {
    std::vector<nlohmann::json> replies;
    while (!pending_.empty()) {
      auto p = std::move(pending_.front());
      pending_.pop_front();
      try {
        apply(p, replies);
      } catch (const Error& e) {
        replies.push_back(error_reply(e.what()));
      }
    }
    rec_.step();
    if (recording_) {
      const auto& s = rec_.state();
      FrameLabel label = FrameLabel::na;
      if (s.dropped) label = FrameLabel::dropped;
      else if (s.lifted) label = s.load_n > s.capacity_n ? FrameLabel::unstable : FrameLabel::stable;
      double dtheta = s.gripper.target_deg - s.gripper.theta_deg;
      if (record_kind_ == DatasetKind::ga) dtheta = std::clamp(dtheta, -expert::kMaxDeltaDeg, expert::kMaxDeltaDeg);
      if (record_kind_ == DatasetKind::stab) dtheta = 0.0;
      recording_->frames.push_back(rec_.frame(dtheta, label));
    }
    return replies;
  }

  bool state_due() const noexcept { return rec_.state().t_tick % teleop::kStateEveryTicks == 0; }

  nlohmann::json state_message() const {
    const auto& s = rec_.state();
    const auto& f = rec_.last_frame();
    bool stable = !s.dropped && s.load_n <= s.capacity_n;
    if (opt_.estimator && !s.dropped) {
      stable = opt_.estimator->stable(GraspFeature::pack(f.values, s.gripper.theta_deg, s.end_effector_pose));
    }
    return {{"type", "state"},
            {"t", static_cast<double>(s.t_tick) / sim::kTickHz},
            {"theta", s.gripper.theta_deg},
            {"taxels", std::vector<double>(f.values.begin(), f.values.end())},
            {"force_n", contact_state(s).normal_force_n},
            {"fill_g", s.fill_g},
            {"dropped", s.dropped},
            {"stable", stable}};
  }

  const SimState& state() const noexcept { return rec_.state(); }
  bool recording() const noexcept { return recording_.has_value(); }
  std::size_t recorded_frames() const noexcept { return recording_ ? recording_->frames.size() : 0; }
  const std::vector<std::string>& written_files() const noexcept { return written_; }

 private:
  struct Pending {
    enum class Kind { cmd, disturb, record_start, record_stop, lift, reset } kind = Kind::cmd;
    std::int64_t seq = 0;
    double theta = 0.0;
    DisturbanceEvent event;
    std::string scenario;
  };

  static double number(const nlohmann::json& msg, const char* key) {
    if (!msg.contains(key) || !msg[key].is_number()) throw ValidationError(key, "must be a number");
    return msg[key].get<double>();
  }

  static nlohmann::json error_reply(const std::string& reason) { return {{"type", "error"}, {"reason", reason}}; }

  void apply(Pending& p, std::vector<nlohmann::json>& replies) {
    switch (p.kind) {
      case Pending::Kind::cmd:
        rec_.state() = set_target_angle(std::move(rec_.state()), p.theta);
        break;
      case Pending::Kind::disturb:
        rec_.state() = inject_disturbance(std::move(rec_.state()), p.event);
        break;
      case Pending::Kind::lift:
        rec_.state() = lift(std::move(rec_.state()));
        break;
      case Pending::Kind::reset:
        rec_ = EpisodeRecorder(reset(opt_.object, opt_.seed), opt_.tactile);
        break;
      case Pending::Kind::record_start: {
        record_kind_ = dataset_kind(scenario_from_string(p.scenario));
        EpisodeRecord r;
        r.header.kind = record_kind_;
        r.header.object_name = opt_.object.name;
        r.header.seed = opt_.seed;
        recording_ = std::move(r);
        break;
      }
      case Pending::Kind::record_stop: {
        const auto path = (opt_.record_root / "data" / std::string(to_string(record_kind_)) /
                           ("teleop_" + opt_.object.name + "_" + std::to_string(++recordings_) + ".tsv"))
                              .string();
        write_dataset(path, *recording_);
        recording_.reset();
        written_.push_back(path);
        replies.push_back({{"type", "ack"}, {"seq", p.seq}, {"path", path}});
        break;
      }
    }
  }

  TeleopOptions opt_;
  EpisodeRecorder rec_;
  std::deque<Pending> pending_;
  std::int64_t seq_ = 0;
  bool recording_requested_ = false;
  std::optional<EpisodeRecord> recording_;
  DatasetKind record_kind_ = DatasetKind::ga;
  int recordings_ = 0;
  std::vector<std::string> written_;
};

}  // namespace tgrasp
