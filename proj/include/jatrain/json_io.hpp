// json_io.hpp
//
// JSON mapping for the engine and simulator types, plus the canonical
// writer used for everything persisted to disk.
//
// Canonical form: object keys sorted, two-space indentation, UTF-8,
// newline-terminated. A floating-point value whose key ends in "_s"
// (seconds) is printed with exactly three decimals; other floats use the
// shortest representation that round-trips. In-memory times are integer
// milliseconds, so seconds survive write/read unchanged.
//
// Readers are strict: unknown keys and wrong types raise ConfigError naming
// the offending field by its dotted path.

#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "jatrain/error.hpp"
#include "jatrain/gaze.hpp"
#include "jatrain/participant_sim.hpp"
#include "jatrain/trial_engine.hpp"

namespace jatrain {

using json = nlohmann::json;

inline constexpr std::string_view kSchemaVersion = "1";

// ---------------------------------------------------------------------------
// Canonical writer

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline void write_canonical(std::string& out, const json& j, int depth, std::string_view key) {
  const std::string pad(static_cast<std::size_t>(depth + 1) * 2, ' ');
  const std::string close_pad(static_cast<std::size_t>(depth) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        out += json(it.key()).dump();
        out += ": ";
        write_canonical(out, it.value(), depth + 1, it.key());
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& el : j) {
        if (!first) out += ",\n";
        first = false;
        out += pad;
        write_canonical(out, el, depth + 1, "");
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case json::value_t::number_float: {
      if (ends_with(key, "_s")) {
        char buf[64];
        double v = j.get<double>();
        if (v == 0.0) v = 0.0;  // no "-0.000"
        std::snprintf(buf, sizeof buf, "%.3f", v);
        out += buf;
      } else {
        out += j.dump();
      }
      return;
    }
    default:
      out += j.dump(-1, ' ', false, json::error_handler_t::strict);
      return;
  }
}

}  // namespace detail

inline std::string canonical_dump(const json& j) {
  std::string out;
  detail::write_canonical(out, j, 0, "");
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Strict object reader

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "(root)" : path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  std::optional<T> opt(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return convert<T>(j_.at(key), field(key));
  }

  template <typename T>
  T req(const char* key) {
    auto v = opt<T>(key);
    if (!v) throw ConfigError(field(key), "required field missing");
    return *v;
  }

  template <typename T>
  void maybe(const char* key, T& target) {
    if (auto v = opt<T>(key)) target = *v;
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(field(key), "required field missing");
    return j_.at(key);
  }

  /// Raises on any key not consumed.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
  }

  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError(where, "expected a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where, "expected a number");
      return v.get<T>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported field type");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

inline double seconds(TimeMs ms) { return static_cast<double>(ms) / 1000.0; }
inline TimeMs ms_from_seconds(double s) { return std::llround(s * 1000.0); }

template <typename T>
json nullable(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json nullable_seconds(const std::optional<TimeMs>& v) {
  return v ? json(seconds(*v)) : json(nullptr);
}

inline json parse_json_text(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what), std::string("malformed JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// SessionConfig

inline json to_json(const SessionConfig& c) {
  return json{{"eye_contact_dwell_ms", c.eye_contact_dwell_ms},
              {"response_dwell_ms", c.response_dwell_ms},
              {"cue_duration_ms", c.cue_duration_ms},
              {"trials_per_session", c.trials_per_session},
              {"inactivity_timeout_ms", c.inactivity_timeout_ms},
              {"head_turn_fraction", c.head_turn_fraction},
              {"cue_validity", c.cue_validity},
              {"rng_seed", c.rng_seed},
              {"timing_mode", std::string(to_string(c.timing_mode))},
              {"object_catalog_size", c.object_catalog_size},
              {"feedback_duration_ms", c.feedback_duration_ms},
              {"gap_tolerance_ms", c.gap_tolerance_ms},
              {"count_gap_time", c.count_gap_time}};
}

/// Missing fields keep the value from `base`; the result is validated.
inline SessionConfig session_config_from_json(const json& j, SessionConfig base = {},
                                              const std::string& path = "config") {
  ObjectReader r(j, path);
  r.maybe("eye_contact_dwell_ms", base.eye_contact_dwell_ms);
  r.maybe("response_dwell_ms", base.response_dwell_ms);
  r.maybe("cue_duration_ms", base.cue_duration_ms);
  r.maybe("trials_per_session", base.trials_per_session);
  r.maybe("inactivity_timeout_ms", base.inactivity_timeout_ms);
  r.maybe("head_turn_fraction", base.head_turn_fraction);
  r.maybe("cue_validity", base.cue_validity);
  r.maybe("rng_seed", base.rng_seed);
  if (auto m = r.opt<std::string>("timing_mode")) {
    try {
      base.timing_mode = timing_mode_from_string(*m);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ".timing_mode", e.reason());
    }
  }
  r.maybe("object_catalog_size", base.object_catalog_size);
  r.maybe("feedback_duration_ms", base.feedback_duration_ms);
  r.maybe("gap_tolerance_ms", base.gap_tolerance_ms);
  r.maybe("count_gap_time", base.count_gap_time);
  r.finish();
  try {
    base.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + e.field(), e.reason());
  }
  return base;
}

// ---------------------------------------------------------------------------
// Participant / trial / aggregates / log

inline json to_json(const ParticipantMeta& m) {
  return json{{"id", m.id},
              {"group", m.group},
              {"age_years", m.age_years},
              {"cars_score", m.cars_score},
              {"synthetic", m.synthetic}};
}

inline ParticipantMeta participant_from_json(const json& j, const std::string& path = "participant") {
  ObjectReader r(j, path);
  ParticipantMeta m;
  m.id = r.req<std::string>("id");
  m.group = r.req<std::string>("group");
  if (m.group != "ASD" && m.group != "NT") throw ConfigError(r.field("group"), "expected ASD or NT");
  r.maybe("age_years", m.age_years);
  r.maybe("cars_score", m.cars_score);
  r.maybe("synthetic", m.synthetic);
  r.finish();
  return m;
}

inline json to_json(const TrialRecord& t) {
  return json{{"trial_index", t.trial_index},
              {"left_object_id", t.left_object_id},
              {"right_object_id", t.right_object_id},
              {"left_object", std::string(kObjectCatalog.at(static_cast<std::size_t>(t.left_object_id) % kObjectCatalog.size()))},
              {"right_object", std::string(kObjectCatalog.at(static_cast<std::size_t>(t.right_object_id) % kObjectCatalog.size()))},
              {"target_side", std::string(to_string(t.target_side))},
              {"cued_side", std::string(to_string(t.cued_side))},
              {"stimulus_onset_s", seconds(t.stimulus_onset_ms)},
              {"eye_contact_registered_s", nullable_seconds(t.eye_contact_registered_ms)},
              {"cue_start_s", nullable_seconds(t.cue_start_ms)},
              {"cue_end_s", nullable_seconds(t.cue_end_ms)},
              {"response_registered_s", nullable_seconds(t.response_registered_ms)},
              {"responded_side", t.responded_side ? json(std::string(to_string(*t.responded_side))) : json(nullptr)},
              {"t_ec_s", nullable_seconds(t.t_ec_ms)},
              {"t_rr_s", nullable_seconds(t.t_rr_ms)},
              {"correct", nullable(t.correct)},
              {"completed", t.completed}};
}

inline TrialRecord trial_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  TrialRecord t;
  auto secs = [&](const char* key) -> std::optional<TimeMs> {
    if (auto v = r.opt<double>(key)) return ms_from_seconds(*v);
    return std::nullopt;
  };
  t.trial_index = r.req<int>("trial_index");
  t.left_object_id = r.req<int>("left_object_id");
  t.right_object_id = r.req<int>("right_object_id");
  r.opt<std::string>("left_object");
  r.opt<std::string>("right_object");
  t.target_side = side_from_string(r.req<std::string>("target_side"));
  t.cued_side = side_from_string(r.req<std::string>("cued_side"));
  t.stimulus_onset_ms = ms_from_seconds(r.req<double>("stimulus_onset_s"));
  t.eye_contact_registered_ms = secs("eye_contact_registered_s");
  t.cue_start_ms = secs("cue_start_s");
  t.cue_end_ms = secs("cue_end_s");
  t.response_registered_ms = secs("response_registered_s");
  if (auto s = r.opt<std::string>("responded_side")) t.responded_side = side_from_string(*s);
  t.t_ec_ms = secs("t_ec_s");
  t.t_rr_ms = secs("t_rr_s");
  t.correct = r.opt<bool>("correct");
  t.completed = r.req<bool>("completed");
  r.finish();
  return t;
}

inline json to_json(const SessionAggregates& a) {
  return json{{"completed_trials", a.completed_trials},
              {"responded_trials", a.responded_trials},
              {"correct_trials", a.correct_trials},
              {"median_t_ec_s", nullable(a.median_t_ec_s)},
              {"mean_t_ec_s", nullable(a.mean_t_ec_s)},
              {"median_t_rr_s", nullable(a.median_t_rr_s)},
              {"mean_t_rr_s", nullable(a.mean_t_rr_s)},
              {"c_pr_percent", nullable(a.c_pr_percent)}};
}

inline SessionAggregates aggregates_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  SessionAggregates a;
  a.completed_trials = r.req<int>("completed_trials");
  a.responded_trials = r.req<int>("responded_trials");
  a.correct_trials = r.req<int>("correct_trials");
  a.median_t_ec_s = r.opt<double>("median_t_ec_s");
  a.mean_t_ec_s = r.opt<double>("mean_t_ec_s");
  a.median_t_rr_s = r.opt<double>("median_t_rr_s");
  a.mean_t_rr_s = r.opt<double>("mean_t_rr_s");
  a.c_pr_percent = r.opt<double>("c_pr_percent");
  r.finish();
  return a;
}

inline json to_json(const SessionLog& log) {
  json trials = json::array();
  for (const auto& t : log.trials) trials.push_back(to_json(t));
  return json{{"schema_version", std::string(kSchemaVersion)},
              {"session_id", log.session_id},
              {"setup", log.setup},
              {"profile", log.profile},
              {"config", to_json(log.config)},
              {"participant", to_json(log.participant)},
              {"trials", std::move(trials)},
              {"termination_reason", std::string(to_string(log.termination_reason))},
              {"ended_s", seconds(log.ended_ms)},
              {"aggregates", to_json(log.aggregates)},
              {"feedback", log.feedback}};
}

inline SessionLog session_log_from_json(const json& j) {
  ObjectReader r(j, "");
  if (r.req<std::string>("schema_version") != kSchemaVersion)
    throw ConfigError("schema_version", "unsupported schema version");
  SessionLog log;
  log.session_id = r.req<std::string>("session_id");
  log.setup = r.req<std::string>("setup");
  log.profile = r.req<std::string>("profile");
  log.config = session_config_from_json(r.raw("config"), {}, "config");
  log.participant = participant_from_json(r.raw("participant"));
  const auto& trials = r.raw("trials");
  if (!trials.is_array()) throw ConfigError("trials", "expected an array");
  for (std::size_t i = 0; i < trials.size(); ++i)
    log.trials.push_back(trial_from_json(trials[i], "trials[" + std::to_string(i) + "]"));
  log.termination_reason = termination_from_string(r.req<std::string>("termination_reason"));
  log.ended_ms = ms_from_seconds(r.req<double>("ended_s"));
  log.aggregates = aggregates_from_json(r.raw("aggregates"), "aggregates");
  log.feedback = r.req<std::string>("feedback");
  r.finish();
  return log;
}

// ---------------------------------------------------------------------------
// Scene

inline json to_json(const Roi& roi) {
  json j{{"id", std::string(to_string(roi.id))}};
  if (const auto* c = std::get_if<Circle>(&roi.shape)) {
    j["shape"] = "circle";
    j["center"] = json::array({c->center.x, c->center.y});
    j["radius"] = c->radius;
  } else {
    const auto& r = std::get<Rect>(roi.shape);
    j["shape"] = "rect";
    j["min"] = json::array({r.min.x, r.min.y});
    j["max"] = json::array({r.max.x, r.max.y});
  }
  return j;
}

inline json to_json(const Scene& scene) {
  json arr = json::array();
  for (const auto& r : scene.rois()) arr.push_back(to_json(r));
  return arr;
}

// ---------------------------------------------------------------------------
// BehaviorProfile

inline json to_json(const LogNormal& d) { return json{{"median_ms", d.median_ms}, {"sigma", d.sigma}}; }

inline LogNormal lognormal_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  LogNormal d;
  d.median_ms = r.req<double>("median_ms");
  d.sigma = r.req<double>("sigma");
  r.finish();
  return d;
}

inline json to_json(const BehaviorProfile& p) {
  return json{{"name", p.name},
              {"orient_latency_to_avatar", to_json(p.orient_latency_to_avatar)},
              {"orient_latency_to_object", to_json(p.orient_latency_to_object)},
              {"follow_prob", p.follow_prob},
              {"gaze_noise_sd", p.gaze_noise_sd},
              {"dropout_rate", p.dropout_rate},
              {"mid_dwell_break_rate", p.mid_dwell_break_rate},
              {"break_min_ms", p.break_min_ms},
              {"break_max_ms", p.break_max_ms},
              {"sample_rate_hz", p.sample_rate_hz},
              {"nonresponder_prob", p.nonresponder_prob}};
}

/// Accepts either a preset name or an object. An object may name a preset in
/// "base" and override individual fields.
inline BehaviorProfile profile_from_json(const json& j, const std::string& path = "profile") {
  if (j.is_string()) {
    try {
      return preset(j.get<std::string>());
    } catch (const InputError& e) {
      throw ConfigError(path, e.what());
    }
  }
  ObjectReader r(j, path);
  BehaviorProfile p;
  if (auto base = r.opt<std::string>("base")) {
    try {
      p = preset(*base);
    } catch (const InputError& e) {
      throw ConfigError(r.field("base"), e.what());
    }
  }
  r.maybe("name", p.name);
  if (r.has("orient_latency_to_avatar"))
    p.orient_latency_to_avatar = lognormal_from_json(r.raw("orient_latency_to_avatar"), r.field("orient_latency_to_avatar"));
  else
    r.opt<double>("orient_latency_to_avatar");
  if (r.has("orient_latency_to_object"))
    p.orient_latency_to_object = lognormal_from_json(r.raw("orient_latency_to_object"), r.field("orient_latency_to_object"));
  else
    r.opt<double>("orient_latency_to_object");
  r.maybe("follow_prob", p.follow_prob);
  r.maybe("gaze_noise_sd", p.gaze_noise_sd);
  r.maybe("dropout_rate", p.dropout_rate);
  r.maybe("mid_dwell_break_rate", p.mid_dwell_break_rate);
  r.maybe("break_min_ms", p.break_min_ms);
  r.maybe("break_max_ms", p.break_max_ms);
  r.maybe("sample_rate_hz", p.sample_rate_hz);
  r.maybe("nonresponder_prob", p.nonresponder_prob);
  r.finish();
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + e.field(), e.reason());
  }
  return p;
}

}  // namespace jatrain
