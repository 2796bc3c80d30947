// runner.hpp
//
// Closed-loop driver: a GazeGenerator produces samples, the Session consumes
// them, and the generator observes the resulting events. A Clock decides
// how session time relates to wall time; fast mode never sleeps, real-time
// mode paces samples against a steady clock, optionally scaled.
//
// The runner also derives the two read-side views the service exposes:
// PerformancePayload (the polled snapshot) and MirrorFrame (the 10 Hz
// schematic stream).

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "jatrain/json_io.hpp"
#include "jatrain/participant_sim.hpp"
#include "jatrain/trial_engine.hpp"

namespace jatrain {

/// "created" before the first input, "terminated" after the end, otherwise
/// the current trial phase.
inline std::string phase_label(const Session& s) {
  if (!s.started()) return "created";
  if (s.terminated()) return "terminated";
  return std::string(to_string(s.phase()));
}

// ---------------------------------------------------------------------------
// Read-side views

struct PerformancePayload {
  std::string session_id;
  ParticipantMeta participant;
  std::vector<TrialRecord> trials;  // completed only
  std::string phase = "created";
  int trial_index = 0;
  TimeMs last_update_ms = 0;
  std::uint64_t sequence = 0;
  std::optional<TerminationReason> termination_reason;

  friend bool operator==(const PerformancePayload&, const PerformancePayload&) = default;
};

inline PerformancePayload make_payload(const std::string& session_id, const Session& s,
                                       TimeMs now_ms, std::uint64_t sequence) {
  PerformancePayload p;
  p.session_id = session_id;
  p.participant = s.participant();
  p.trials = s.records();
  p.phase = phase_label(s);
  p.trial_index = s.trial_index();
  p.last_update_ms = now_ms;
  p.sequence = sequence;
  if (s.termination()) p.termination_reason = s.termination()->reason;
  return p;
}

inline json to_json(const PerformancePayload& p) {
  json trials = json::array();
  for (const auto& t : p.trials) trials.push_back(to_json(t));
  return json{{"schema_version", std::string(kSchemaVersion)},
              {"session_id", p.session_id},
              {"participant", to_json(p.participant)},
              {"trials", std::move(trials)},
              {"phase", p.phase},
              {"trial_index", p.trial_index},
              {"last_update_ms", p.last_update_ms},
              {"sequence", p.sequence},
              {"termination_reason", p.termination_reason
                                         ? json(std::string(to_string(*p.termination_reason)))
                                         : json(nullptr)}};
}

struct CueIndicator {
  Side side = Side::left;
  bool finger_point = false;

  friend bool operator==(const CueIndicator&, const CueIndicator&) = default;
};

struct FeedbackFlash {
  TimeMs t_ms = 0;
  int trial_index = 0;
  bool positive = false;
  Side responded_side = Side::left;

  friend bool operator==(const FeedbackFlash&, const FeedbackFlash&) = default;
};

struct MirrorFrame {
  std::string session_id;
  TimeMs t_ms = 0;
  std::string phase = "created";
  int trial_index = 0;
  std::optional<Point> gaze;
  std::optional<CueIndicator> cue;
  std::optional<FeedbackFlash> last_feedback;
};

inline json to_json(const MirrorFrame& f, const Scene& scene) {
  json gaze = f.gaze ? json{{"x", f.gaze->x}, {"y", f.gaze->y}} : json(nullptr);
  json cue = f.cue ? json{{"side", std::string(to_string(f.cue->side))},
                          {"gesture", f.cue->finger_point ? "finger_point" : "head_turn"}}
                   : json(nullptr);
  json fb = f.last_feedback
                ? json{{"t_ms", f.last_feedback->t_ms},
                       {"trial_index", f.last_feedback->trial_index},
                       {"positive", f.last_feedback->positive},
                       {"responded_side", std::string(to_string(f.last_feedback->responded_side))}}
                : json(nullptr);
  return json{{"schema_version", std::string(kSchemaVersion)},
              {"session_id", f.session_id},
              {"t_ms", f.t_ms},
              {"phase", f.phase},
              {"trial_index", f.trial_index},
              {"rois", to_json(scene)},
              {"gaze", std::move(gaze)},
              {"cue", std::move(cue)},
              {"last_feedback", std::move(fb)}};
}

// ---------------------------------------------------------------------------
// Clocks

class Clock {
 public:
  virtual ~Clock() = default;
  /// Blocks until session time `t_ms` is due. Returns early (false) once
  /// `interrupted` reports true.
  virtual bool wait_until(TimeMs t_ms, const std::function<bool()>& interrupted) = 0;
};

class SimulatedClock final : public Clock {
 public:
  bool wait_until(TimeMs, const std::function<bool()>&) override { return true; }
};

/// Session time runs at `time_scale` times wall time (1.0 = real time).
class WallClock final : public Clock {
 public:
  explicit WallClock(double time_scale = 1.0) : scale_(time_scale) {
    if (!(time_scale > 0.0)) throw ConfigError("time_scale", "must be > 0");
  }

  bool wait_until(TimeMs t_ms, const std::function<bool()>& interrupted) override {
    using namespace std::chrono;
    if (!origin_) origin_ = steady_clock::now();
    const auto due = *origin_ + duration_cast<steady_clock::duration>(
                                    duration<double, std::milli>(static_cast<double>(t_ms) / scale_));
    while (steady_clock::now() < due) {
      if (interrupted && interrupted()) return false;
      std::this_thread::sleep_until(std::min(due, steady_clock::now() + milliseconds(20)));
    }
    return true;
  }

 private:
  double scale_;
  std::optional<std::chrono::steady_clock::time_point> origin_;
};

// ---------------------------------------------------------------------------
// Runner

struct RunnerHooks {
  /// Called after every input that produced events, with the session state
  /// already updated.
  std::function<void(std::span<const EngineEvent>, const Session&, TimeMs)> on_events;
  std::function<void(const MirrorFrame&)> on_frame;
  std::function<bool()> stop_requested;
};

class SessionRunner {
 public:
  SessionRunner(std::string session_id, Session& session, GazeGenerator& generator, Clock& clock,
                double frame_rate_hz = 10.0)
      : id_(std::move(session_id)), session_(session), gen_(generator), clock_(clock) {
    if (!(frame_rate_hz > 0.0)) throw ConfigError("frame_rate_hz", "must be > 0");
    frame_period_ms_ = 1000.0 / frame_rate_hz;
  }

  /// Runs until the session terminates; returns the termination time.
  TimeMs run(const RunnerHooks& hooks = {}) {
    auto stop = [&] { return hooks.stop_requested && hooks.stop_requested(); };
    TimeMs now = 0;
    while (!session_.terminated()) {
      const TimeMs t = gen_.next_sample_time();
      if (!clock_.wait_until(t, stop) || stop()) {
        // Operator stop lands at the last session time reached.
        apply(OperatorStop{now}, hooks, now);
        break;
      }
      const GazeSample s = gen_.next();
      now = s.t_ms;
      last_gaze_ = s.valid ? std::optional<Point>(Point{s.x, s.y}) : std::nullopt;
      apply(s, hooks, now);
      if (!session_.terminated() && static_cast<double>(now) >= next_frame_ms_) {
        emit_frame(now, hooks);
        while (static_cast<double>(now) >= next_frame_ms_) next_frame_ms_ += frame_period_ms_;
      }
    }
    const TimeMs end = session_.termination()->t_ms;
    last_gaze_.reset();
    emit_frame(std::max(end, last_frame_ms_), hooks);
    return end;
  }

  MirrorFrame frame(TimeMs t) const {
    MirrorFrame f;
    f.session_id = id_;
    f.t_ms = t;
    f.phase = phase_label(session_);
    f.trial_index = session_.trial_index();
    f.gaze = last_gaze_;
    if (auto side = session_.active_cue())
      f.cue = CueIndicator{*side, session_.phase() == TrialPhase::CueFingerPoint};
    f.last_feedback = last_feedback_;
    return f;
  }

 private:
  void apply(const EngineInput& in, const RunnerHooks& hooks, TimeMs now) {
    const auto events = session_.step(in);
    if (events.empty()) return;
    for (const auto& ev : events)
      if (const auto* fb = std::get_if<FeedbackGiven>(&ev))
        last_feedback_ = FeedbackFlash{fb->t_ms, fb->trial_index, fb->positive, fb->responded_side};
    gen_.observe(events);
    if (hooks.on_events) hooks.on_events(events, session_, now);
  }

  void emit_frame(TimeMs t, const RunnerHooks& hooks) {
    last_frame_ms_ = t;
    if (hooks.on_frame) hooks.on_frame(frame(t));
  }

  std::string id_;
  Session& session_;
  GazeGenerator& gen_;
  Clock& clock_;
  double frame_period_ms_ = 100.0;
  double next_frame_ms_ = 0.0;
  TimeMs last_frame_ms_ = 0;
  std::optional<Point> last_gaze_;
  std::optional<FeedbackFlash> last_feedback_;
};

/// Seed for the generator paired with a session seeded by `rng_seed`.
inline std::uint64_t generator_seed(std::uint64_t rng_seed) { return derive_seed(rng_seed, 0x9a2e); }

/// One fast-mode simulated session, start to finish.
inline SessionLog run_simulated_session(const std::string& session_id, const std::string& setup,
                                        const SessionConfig& config, const ParticipantMeta& meta,
                                        const BehaviorProfile& profile,
                                        const std::vector<TrialPlan>& plan = {},
                                        const Scene& scene = Scene::standard()) {
  Session session(config, meta, scene);
  GazeGenerator gen(profile, scene, generator_seed(config.rng_seed), plan);
  SimulatedClock clock;
  SessionRunner runner(session_id, session, gen, clock);
  runner.run();
  SessionLog log = session.finalize();
  log.session_id = session_id;
  log.setup = setup;
  log.profile = profile.name;
  return log;
}

}  // namespace jatrain
