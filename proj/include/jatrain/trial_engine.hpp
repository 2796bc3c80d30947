// trial_engine.hpp
//
// Experiment controller for one joint-attention session.
//
// A session is a deterministic function of its config and an ordered input
// stream (gaze samples, clock ticks, operator stop). Each trial runs
//
//   AwaitEyeContact -> CueHeadTurn -> CueFingerPoint -> AwaitResponse
//     -> Feedback -> Done
//
// Eye contact is a dwell on the avatar's eyes; the cue then plays for
// cue_duration_ms (head turn first, finger point for the remainder); object
// trackers are armed only when the cue ends, so anticipatory looks during
// the cue never count as a response. The first object dwell decides the
// trial. The session stops when every trial is done, when no in-region gaze
// has been seen for inactivity_timeout_ms, or on operator request.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "jatrain/error.hpp"
#include "jatrain/gaze.hpp"
#include "jatrain/rng.hpp"

namespace jatrain {

enum class Side { left, right };

constexpr std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

inline Side side_from_string(std::string_view s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  throw InputError("unknown side '" + std::string(s) + "'");
}

constexpr Side opposite(Side s) { return s == Side::left ? Side::right : Side::left; }

constexpr RoiId roi_for(Side s) { return s == Side::left ? RoiId::object_left : RoiId::object_right; }

enum class TrialPhase { AwaitEyeContact, CueHeadTurn, CueFingerPoint, AwaitResponse, Feedback, Done };

constexpr std::string_view to_string(TrialPhase p) {
  switch (p) {
    case TrialPhase::AwaitEyeContact: return "AwaitEyeContact";
    case TrialPhase::CueHeadTurn: return "CueHeadTurn";
    case TrialPhase::CueFingerPoint: return "CueFingerPoint";
    case TrialPhase::AwaitResponse: return "AwaitResponse";
    case TrialPhase::Feedback: return "Feedback";
    case TrialPhase::Done: return "Done";
  }
  return "?";
}

enum class TimingMode { fast, real_time };

constexpr std::string_view to_string(TimingMode m) { return m == TimingMode::fast ? "fast" : "real_time"; }

inline TimingMode timing_mode_from_string(std::string_view s) {
  if (s == "fast") return TimingMode::fast;
  if (s == "real_time") return TimingMode::real_time;
  throw ConfigError("timing_mode", "expected 'fast' or 'real_time', got '" + std::string(s) + "'");
}

enum class TerminationReason { completed, inactivity_timeout, operator_stop };

constexpr std::string_view to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::completed: return "completed";
    case TerminationReason::inactivity_timeout: return "inactivity_timeout";
    case TerminationReason::operator_stop: return "operator_stop";
  }
  return "?";
}

inline TerminationReason termination_from_string(std::string_view s) {
  if (s == "completed") return TerminationReason::completed;
  if (s == "inactivity_timeout") return TerminationReason::inactivity_timeout;
  if (s == "operator_stop") return TerminationReason::operator_stop;
  throw InputError("unknown termination reason '" + std::string(s) + "'");
}

struct SessionConfig {
  TimeMs eye_contact_dwell_ms = 2000;
  TimeMs response_dwell_ms = 2000;
  TimeMs cue_duration_ms = 5000;
  int trials_per_session = 2;
  TimeMs inactivity_timeout_ms = 1'200'000;
  double head_turn_fraction = 0.4;
  double cue_validity = 1.0;
  std::uint64_t rng_seed = 0;
  TimingMode timing_mode = TimingMode::fast;
  int object_catalog_size = 7;
  TimeMs feedback_duration_ms = 2000;
  TimeMs gap_tolerance_ms = 100;
  bool count_gap_time = false;

  void validate() const {
    auto positive = [](TimeMs v, const char* name) {
      if (v <= 0) throw ConfigError(name, "must be > 0");
    };
    positive(eye_contact_dwell_ms, "eye_contact_dwell_ms");
    positive(response_dwell_ms, "response_dwell_ms");
    positive(cue_duration_ms, "cue_duration_ms");
    positive(inactivity_timeout_ms, "inactivity_timeout_ms");
    positive(feedback_duration_ms, "feedback_duration_ms");
    if (trials_per_session < 1) throw ConfigError("trials_per_session", "must be >= 1");
    if (!(head_turn_fraction > 0.0 && head_turn_fraction < 1.0))
      throw ConfigError("head_turn_fraction", "must lie strictly between 0 and 1");
    if (!(cue_validity >= 0.0 && cue_validity <= 1.0))
      throw ConfigError("cue_validity", "must lie in [0, 1]");
    if (object_catalog_size < 2 || object_catalog_size > 7)
      throw ConfigError("object_catalog_size", "must lie in [2, 7]");
    if (gap_tolerance_ms < 0) throw ConfigError("gap_tolerance_ms", "must be >= 0");
    if (gap_tolerance_ms >= std::min(eye_contact_dwell_ms, response_dwell_ms))
      throw ConfigError("gap_tolerance_ms", "must be < both dwell durations");
  }

  DwellConfig eye_contact_dwell() const {
    return {eye_contact_dwell_ms, gap_tolerance_ms, count_gap_time};
  }
  DwellConfig response_dwell() const { return {response_dwell_ms, gap_tolerance_ms, count_gap_time}; }

  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

/// Participant attributes carried into the log. Synthetic participants are
/// flagged as such.
struct ParticipantMeta {
  std::string id;
  std::string group;  // "ASD" or "NT"
  double age_years = 0.0;
  double cars_score = 0.0;
  bool synthetic = true;

  friend bool operator==(const ParticipantMeta&, const ParticipantMeta&) = default;
};

/// Object names for the seven-item catalog; ids index into this table.
inline constexpr std::array<std::string_view, 7> kObjectCatalog{
    "ball", "toy_car", "teddy_bear", "cup", "duck", "train", "apple"};

struct TrialObjects {
  int left_object_id = 0;
  int right_object_id = 1;
  Side target_side = Side::left;
  Side cued_side = Side::left;
};

/// Two distinct objects uniformly without replacement, a uniform target side,
/// and a cue that points at the target with probability cue_validity.
inline TrialObjects select_trial_objects(Rng& rng, int catalog_size, double cue_validity) {
  if (catalog_size < 2) throw ConfigError("object_catalog_size", "catalog needs at least 2 objects");
  TrialObjects out;
  out.left_object_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(catalog_size)));
  int right = static_cast<int>(rng.below(static_cast<std::uint64_t>(catalog_size - 1)));
  if (right >= out.left_object_id) ++right;
  out.right_object_id = right;
  out.target_side = rng.bernoulli(0.5) ? Side::left : Side::right;
  out.cued_side = rng.bernoulli(cue_validity) ? out.target_side : opposite(out.target_side);
  return out;
}

struct TrialRecord {
  int trial_index = 0;
  int left_object_id = 0;
  int right_object_id = 1;
  Side target_side = Side::left;
  Side cued_side = Side::left;
  TimeMs stimulus_onset_ms = 0;
  std::optional<TimeMs> eye_contact_registered_ms;
  std::optional<TimeMs> cue_start_ms;
  std::optional<TimeMs> cue_end_ms;
  std::optional<TimeMs> response_registered_ms;
  std::optional<Side> responded_side;
  std::optional<TimeMs> t_ec_ms;
  std::optional<TimeMs> t_rr_ms;
  /// Null while no response has been registered.
  std::optional<bool> correct;
  /// True once the trial reached Done.
  bool completed = false;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Session-level summaries. Times in seconds and C_PR in percent, both
/// quantized to 1e-3 so they survive the canonical JSON form unchanged.
struct SessionAggregates {
  int completed_trials = 0;
  int responded_trials = 0;
  int correct_trials = 0;
  std::optional<double> median_t_ec_s;
  std::optional<double> mean_t_ec_s;
  std::optional<double> median_t_rr_s;
  std::optional<double> mean_t_rr_s;
  std::optional<double> c_pr_percent;

  friend bool operator==(const SessionAggregates&, const SessionAggregates&) = default;
};

struct SessionLog {
  std::string session_id;
  std::string setup;    // "VR" / "AR" in batch runs; free-form otherwise
  std::string profile;  // behaviour profile that produced the gaze, if simulated
  SessionConfig config;
  ParticipantMeta participant;
  std::vector<TrialRecord> trials;
  TerminationReason termination_reason = TerminationReason::completed;
  TimeMs ended_ms = 0;
  SessionAggregates aggregates;
  std::string feedback;

  friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

inline double quantize3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw InputError("median of empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw InputError("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Median/mean over completed trials; C_PR over responded trials (null when
/// nothing was responded).
inline SessionAggregates aggregate_trials(const std::vector<TrialRecord>& trials) {
  SessionAggregates a;
  std::vector<double> tec, trr;
  for (const auto& t : trials) {
    if (t.correct) {
      ++a.responded_trials;
      if (*t.correct) ++a.correct_trials;
    }
    if (!t.completed) continue;
    ++a.completed_trials;
    if (t.t_ec_ms) tec.push_back(static_cast<double>(*t.t_ec_ms) / 1000.0);
    if (t.t_rr_ms) trr.push_back(static_cast<double>(*t.t_rr_ms) / 1000.0);
  }
  if (!tec.empty()) {
    a.median_t_ec_s = quantize3(median_of(tec));
    a.mean_t_ec_s = quantize3(mean_of(tec));
  }
  if (!trr.empty()) {
    a.median_t_rr_s = quantize3(median_of(trr));
    a.mean_t_rr_s = quantize3(mean_of(trr));
  }
  if (a.responded_trials > 0)
    a.c_pr_percent = quantize3(100.0 * a.correct_trials / a.responded_trials);
  return a;
}

// ---------------------------------------------------------------------------
// Inputs and events

struct ClockTick {
  TimeMs t_ms = 0;
};

struct OperatorStop {
  TimeMs t_ms = 0;
};

using EngineInput = std::variant<GazeSample, ClockTick, OperatorStop>;

inline TimeMs input_time(const EngineInput& in) {
  return std::visit([](const auto& v) { return v.t_ms; }, in);
}

struct TrialStarted {
  TimeMs t_ms = 0;
  int trial_index = 0;
  TrialObjects objects;
};

struct PhaseChanged {
  TimeMs t_ms = 0;
  int trial_index = 0;
  TrialPhase from = TrialPhase::AwaitEyeContact;
  TrialPhase to = TrialPhase::AwaitEyeContact;
};

struct FixationRegistered {
  int trial_index = 0;
  FixationEvent fixation;
};

struct FeedbackGiven {
  TimeMs t_ms = 0;
  int trial_index = 0;
  bool positive = false;
  Side responded_side = Side::left;
};

struct TrialCompleted {
  TimeMs t_ms = 0;
  TrialRecord record;
};

struct SessionTerminated {
  TimeMs t_ms = 0;
  TerminationReason reason = TerminationReason::completed;
};

using EngineEvent =
    std::variant<TrialStarted, PhaseChanged, FixationRegistered, FeedbackGiven, TrialCompleted,
                 SessionTerminated>;

struct Termination {
  TimeMs t_ms = 0;
  TerminationReason reason = TerminationReason::completed;
};

// ---------------------------------------------------------------------------

class Session {
 public:
  Session(SessionConfig config, ParticipantMeta participant, Scene scene = Scene::standard())
      : config_((config.validate(), config)),
        participant_(std::move(participant)),
        scene_(std::move(scene)),
        rng_(derive_seed(config_.rng_seed, 0x7431a)),
        eyes_(scene_.roi(RoiId::avatar_eyes), config_.eye_contact_dwell()),
        left_(scene_.roi(RoiId::object_left), config_.response_dwell()),
        right_(scene_.roi(RoiId::object_right), config_.response_dwell()) {}

  std::vector<EngineEvent> step(const EngineInput& input) {
    if (termination_)
      throw SessionClosedError("session terminated (" + std::string(to_string(termination_->reason)) +
                               "); input rejected");
    const TimeMs t = input_time(input);
    if (t < 0) throw OrderingError("negative input time");
    if (last_input_ms_ && t < *last_input_ms_)
      throw OrderingError("input at " + std::to_string(t) + " ms precedes previous input at " +
                          std::to_string(*last_input_ms_) + " ms");
    if (const auto* s = std::get_if<GazeSample>(&input)) {
      if (last_sample_ms_ && s->t_ms <= *last_sample_ms_)
        throw OrderingError("gaze sample at " + std::to_string(s->t_ms) +
                            " ms does not follow previous sample at " +
                            std::to_string(*last_sample_ms_) + " ms");
      last_sample_ms_ = s->t_ms;
    }
    last_input_ms_ = t;

    std::vector<EngineEvent> events;
    if (!started_) {
      started_ = true;
      last_activity_ms_ = t;
      begin_trial(t, events);
    }

    if (auto term = check_inactivity(t)) {
      events.emplace_back(SessionTerminated{term->t_ms, term->reason});
      return events;
    }

    advance_clock(t, events);
    if (termination_) return events;

    if (std::holds_alternative<OperatorStop>(input)) {
      terminate(t, TerminationReason::operator_stop, events);
      return events;
    }
    if (const auto* s = std::get_if<GazeSample>(&input)) on_gaze(*s, events);
    return events;
  }

  /// Ends the session when no in-region gaze was seen for the timeout. The
  /// step() loop calls this before consuming every input.
  std::optional<Termination> check_inactivity(TimeMs now_ms) {
    if (termination_ || !started_) return std::nullopt;
    if (now_ms - last_activity_ms_ >= config_.inactivity_timeout_ms) {
      std::vector<EngineEvent> sink;
      terminate(now_ms, TerminationReason::inactivity_timeout, sink);
      return termination_;
    }
    return std::nullopt;
  }

  SessionLog finalize() const {
    if (!termination_) throw IllegalStateError("cannot finalize a running session");
    SessionLog log;
    log.config = config_;
    log.participant = participant_;
    log.trials = records_;
    if (current_ && !current_->completed) log.trials.push_back(*current_);
    log.termination_reason = termination_->reason;
    log.ended_ms = termination_->t_ms;
    log.aggregates = aggregate_trials(log.trials);
    return log;
  }

  bool started() const noexcept { return started_; }
  bool terminated() const noexcept { return termination_.has_value(); }
  const std::optional<Termination>& termination() const noexcept { return termination_; }
  TrialPhase phase() const noexcept { return phase_; }
  int trial_index() const noexcept { return trial_index_; }
  TimeMs last_activity_ms() const noexcept { return last_activity_ms_; }
  const SessionConfig& config() const noexcept { return config_; }
  const ParticipantMeta& participant() const noexcept { return participant_; }
  const Scene& scene() const noexcept { return scene_; }
  /// Completed trials, in order.
  const std::vector<TrialRecord>& records() const noexcept { return records_; }
  const std::optional<TrialRecord>& current_trial() const noexcept { return current_; }
  /// Side the avatar is cueing while a cue phase is active.
  std::optional<Side> active_cue() const {
    if (current_ && (phase_ == TrialPhase::CueHeadTurn || phase_ == TrialPhase::CueFingerPoint))
      return current_->cued_side;
    return std::nullopt;
  }

 private:
  void set_phase(TimeMs t, TrialPhase to, std::vector<EngineEvent>& events) {
    events.emplace_back(PhaseChanged{t, trial_index_, phase_, to});
    phase_ = to;
  }

  void begin_trial(TimeMs t, std::vector<EngineEvent>& events) {
    const auto objects =
        select_trial_objects(rng_, config_.object_catalog_size, config_.cue_validity);
    TrialRecord rec;
    rec.trial_index = trial_index_;
    rec.left_object_id = objects.left_object_id;
    rec.right_object_id = objects.right_object_id;
    rec.target_side = objects.target_side;
    rec.cued_side = objects.cued_side;
    rec.stimulus_onset_ms = t;
    current_ = rec;
    phase_ = TrialPhase::AwaitEyeContact;
    eyes_.rearm();
    events.emplace_back(TrialStarted{t, trial_index_, objects});
  }

  void advance_clock(TimeMs t, std::vector<EngineEvent>& events) {
    for (;;) {
      if (phase_ == TrialPhase::CueHeadTurn && t >= head_turn_end_ms_) {
        set_phase(head_turn_end_ms_, TrialPhase::CueFingerPoint, events);
      } else if (phase_ == TrialPhase::CueFingerPoint && t >= *current_->cue_end_ms) {
        set_phase(*current_->cue_end_ms, TrialPhase::AwaitResponse, events);
        left_.rearm();
        right_.rearm();
      } else if (phase_ == TrialPhase::Feedback && t >= feedback_end_ms_) {
        set_phase(feedback_end_ms_, TrialPhase::Done, events);
        current_->completed = true;
        records_.push_back(*current_);
        events.emplace_back(TrialCompleted{feedback_end_ms_, *current_});
        if (static_cast<int>(records_.size()) == config_.trials_per_session) {
          terminate(feedback_end_ms_, TerminationReason::completed, events);
          return;
        }
        ++trial_index_;
        begin_trial(t, events);
      } else {
        return;
      }
    }
  }

  void on_gaze(const GazeSample& s, std::vector<EngineEvent>& events) {
    if (scene_.inside_any(s)) last_activity_ms_ = s.t_ms;

    // Every tracker sees every sample so stream ordering is enforced
    // uniformly; only the armed phase can act on an event.
    auto eye_event = eyes_.update(s);
    auto left_event = left_.update(s);
    auto right_event = right_.update(s);

    switch (phase_) {
      case TrialPhase::AwaitEyeContact:
        if (eye_event) {
          current_->eye_contact_registered_ms = eye_event->registered_ms;
          current_->t_ec_ms = eye_event->registered_ms - current_->stimulus_onset_ms;
          current_->cue_start_ms = eye_event->registered_ms;
          current_->cue_end_ms = eye_event->registered_ms + config_.cue_duration_ms;
          head_turn_end_ms_ =
              eye_event->registered_ms +
              std::llround(config_.head_turn_fraction * static_cast<double>(config_.cue_duration_ms));
          events.emplace_back(FixationRegistered{trial_index_, *eye_event});
          set_phase(eye_event->registered_ms, TrialPhase::CueHeadTurn, events);
        }
        break;
      case TrialPhase::AwaitResponse: {
        std::optional<FixationEvent> hit = left_event ? left_event : right_event;
        if (!hit) break;
        const Side side = hit->roi_id == RoiId::object_left ? Side::left : Side::right;
        current_->response_registered_ms = hit->registered_ms;
        current_->responded_side = side;
        current_->t_rr_ms = hit->registered_ms - *current_->cue_end_ms;
        current_->correct = side == current_->target_side;
        events.emplace_back(FixationRegistered{trial_index_, *hit});
        set_phase(hit->registered_ms, TrialPhase::Feedback, events);
        events.emplace_back(FeedbackGiven{hit->registered_ms, trial_index_, *current_->correct, side});
        feedback_end_ms_ = hit->registered_ms + config_.feedback_duration_ms;
        break;
      }
      default:
        break;
    }
  }

  void terminate(TimeMs t, TerminationReason reason, std::vector<EngineEvent>& events) {
    termination_ = Termination{t, reason};
    events.emplace_back(SessionTerminated{t, reason});
  }

  SessionConfig config_;
  ParticipantMeta participant_;
  Scene scene_;
  Rng rng_;
  DwellTracker eyes_;
  DwellTracker left_;
  DwellTracker right_;

  bool started_ = false;
  std::optional<Termination> termination_;
  std::optional<TimeMs> last_input_ms_;
  std::optional<TimeMs> last_sample_ms_;
  TimeMs last_activity_ms_ = 0;
  TrialPhase phase_ = TrialPhase::AwaitEyeContact;
  int trial_index_ = 0;
  std::optional<TrialRecord> current_;
  std::vector<TrialRecord> records_;
  TimeMs head_turn_end_ms_ = 0;
  TimeMs feedback_end_ms_ = 0;
};

/// Factory mirroring the service's "create session" operation.
inline Session new_session(const SessionConfig& config, ParticipantMeta participant) {
  return Session(config, std::move(participant));
}

}  // namespace jatrain
