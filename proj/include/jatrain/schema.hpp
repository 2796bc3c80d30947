// schema.hpp
//
// Published JSON Schemas (draft-07) for the four wire/disk formats, and a
// validator for the keyword subset they use: type, const, enum, properties,
// required, additionalProperties (boolean), items, minimum, maximum,
// exclusiveMinimum, exclusiveMaximum, minItems, maxItems.
//
// The schemas are assembled here and exported to schemas/*.json by
// `jatrain schemas export`; a test keeps the checked-in files in sync.

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "jatrain/error.hpp"
#include "jatrain/json_io.hpp"

namespace jatrain::schema {

namespace detail {

inline json type(std::string_view t) { return json{{"type", std::string(t)}}; }

inline json nullable(std::string_view t) {
  return json{{"type", json::array({std::string(t), "null"})}};
}

inline json int_min(std::int64_t min) { return json{{"type", "integer"}, {"minimum", min}}; }

inline json string_enum(std::vector<std::string> values) {
  return json{{"type", "string"}, {"enum", values}};
}

inline json object(json properties, std::vector<std::string> required) {
  json o{{"type", "object"}, {"properties", std::move(properties)}, {"additionalProperties", false}};
  if (!required.empty()) o["required"] = required;
  return o;
}

inline std::vector<std::string> keys_of(const json& properties) {
  std::vector<std::string> out;
  for (auto it = properties.begin(); it != properties.end(); ++it) out.push_back(it.key());
  return out;
}

inline std::vector<std::string> phase_labels() {
  return {"created",       "AwaitEyeContact", "CueHeadTurn", "CueFingerPoint",
          "AwaitResponse", "Feedback",        "Done",        "terminated"};
}

inline json point2() {
  return json{{"type", "array"}, {"items", type("number")}, {"minItems", 2}, {"maxItems", 2}};
}

inline json config_properties() {
  return json{
      {"eye_contact_dwell_ms", int_min(1)},
      {"response_dwell_ms", int_min(1)},
      {"cue_duration_ms", int_min(1)},
      {"trials_per_session", int_min(1)},
      {"inactivity_timeout_ms", int_min(1)},
      {"head_turn_fraction", {{"type", "number"}, {"exclusiveMinimum", 0}, {"exclusiveMaximum", 1}}},
      {"cue_validity", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
      {"rng_seed", int_min(0)},
      {"timing_mode", string_enum({"fast", "real_time"})},
      {"object_catalog_size", {{"type", "integer"}, {"minimum", 2}, {"maximum", 7}}},
      {"feedback_duration_ms", int_min(1)},
      {"gap_tolerance_ms", int_min(0)},
      {"count_gap_time", type("boolean")},
  };
}

inline json participant_schema() {
  return object(json{{"id", type("string")},
                     {"group", string_enum({"ASD", "NT"})},
                     {"age_years", type("number")},
                     {"cars_score", type("number")},
                     {"synthetic", type("boolean")}},
                {"id", "group"});
}

inline json participant_complete_schema() {
  json s = participant_schema();
  s["required"] = keys_of(s["properties"]);
  return s;
}

inline json trial_schema() {
  json side = string_enum({"left", "right"});
  json side_or_null{{"type", json::array({"string", "null"})}, {"enum", json::array({"left", "right", nullptr})}};
  json catalog = {{"type", "integer"}, {"minimum", 0}, {"maximum", 6}};
  json props{{"trial_index", int_min(0)},
             {"left_object_id", catalog},
             {"right_object_id", catalog},
             {"left_object", type("string")},
             {"right_object", type("string")},
             {"target_side", side},
             {"cued_side", side},
             {"stimulus_onset_s", {{"type", "number"}, {"minimum", 0}}},
             {"eye_contact_registered_s", nullable("number")},
             {"cue_start_s", nullable("number")},
             {"cue_end_s", nullable("number")},
             {"response_registered_s", nullable("number")},
             {"responded_side", side_or_null},
             {"t_ec_s", nullable("number")},
             {"t_rr_s", nullable("number")},
             {"correct", nullable("boolean")},
             {"completed", type("boolean")}};
  return object(props, keys_of(props));
}

inline json aggregates_schema() {
  json props{{"completed_trials", int_min(0)},  {"responded_trials", int_min(0)},
             {"correct_trials", int_min(0)},    {"median_t_ec_s", nullable("number")},
             {"mean_t_ec_s", nullable("number")}, {"median_t_rr_s", nullable("number")},
             {"mean_t_rr_s", nullable("number")}, {"c_pr_percent", nullable("number")}};
  return object(props, keys_of(props));
}

inline json trials_array() { return json{{"type", "array"}, {"items", trial_schema()}}; }

inline json roi_schema() {
  return object(json{{"id", string_enum({"avatar_eyes", "object_left", "object_right"})},
                     {"shape", string_enum({"circle", "rect"})},
                     {"center", point2()},
                     {"radius", {{"type", "number"}, {"exclusiveMinimum", 0}}},
                     {"min", point2()},
                     {"max", point2()}},
                {"id", "shape"});
}

inline json with_header(json s, std::string_view title, std::string_view id) {
  s["$schema"] = "http://json-schema.org/draft-07/schema#";
  s["$id"] = "https://jatrain.local/schemas/" + std::string(id) + ".schema.json";
  s["title"] = std::string(title);
  return s;
}

}  // namespace detail

/// Request/config form: every field optional, defaults fill the gaps.
inline json session_config() {
  return detail::with_header(detail::object(detail::config_properties(), {}), "SessionConfig",
                             "session_config");
}

inline json session_log() {
  using namespace detail;
  json config = object(config_properties(), keys_of(config_properties()));
  json props{{"schema_version", {{"type", "string"}, {"const", std::string(kSchemaVersion)}}},
             {"session_id", type("string")},
             {"setup", type("string")},
             {"profile", type("string")},
             {"config", config},
             {"participant", participant_complete_schema()},
             {"trials", trials_array()},
             {"termination_reason", string_enum({"completed", "inactivity_timeout", "operator_stop"})},
             {"ended_s", {{"type", "number"}, {"minimum", 0}}},
             {"aggregates", aggregates_schema()},
             {"feedback", type("string")}};
  return with_header(object(props, keys_of(props)), "SessionLog", "session_log");
}

inline json performance_payload() {
  using namespace detail;
  json props{
      {"schema_version", {{"type", "string"}, {"const", std::string(kSchemaVersion)}}},
      {"session_id", type("string")},
      {"participant", participant_complete_schema()},
      {"trials", trials_array()},
      {"phase", string_enum(phase_labels())},
      {"trial_index", int_min(0)},
      {"last_update_ms", int_min(0)},
      {"sequence", int_min(0)},
      {"termination_reason",
       {{"type", json::array({"string", "null"})},
        {"enum", json::array({"completed", "inactivity_timeout", "operator_stop", nullptr})}}}};
  return with_header(object(props, keys_of(props)), "PerformancePayload", "performance_payload");
}

inline json mirror_frame() {
  using namespace detail;
  json side = string_enum({"left", "right"});
  json gaze = object(json{{"x", type("number")}, {"y", type("number")}}, {"x", "y"});
  gaze["type"] = json::array({"object", "null"});
  json cue = object(json{{"side", side}, {"gesture", string_enum({"head_turn", "finger_point"})}},
                    {"side", "gesture"});
  cue["type"] = json::array({"object", "null"});
  json fb = object(json{{"t_ms", int_min(0)},
                        {"trial_index", int_min(0)},
                        {"positive", type("boolean")},
                        {"responded_side", side}},
                   {"t_ms", "trial_index", "positive", "responded_side"});
  fb["type"] = json::array({"object", "null"});
  json props{{"schema_version", {{"type", "string"}, {"const", std::string(kSchemaVersion)}}},
             {"session_id", type("string")},
             {"t_ms", int_min(0)},
             {"phase", string_enum(phase_labels())},
             {"trial_index", int_min(0)},
             {"rois", {{"type", "array"}, {"items", roi_schema()}, {"minItems", 3}, {"maxItems", 3}}},
             {"gaze", gaze},
             {"cue", cue},
             {"last_feedback", fb}};
  return with_header(object(props, keys_of(props)), "MirrorFrame", "mirror_frame");
}

/// File stem -> schema, in export order.
inline std::map<std::string, json> all() {
  return {{"session_config", session_config()},
          {"session_log", session_log()},
          {"performance_payload", performance_payload()},
          {"mirror_frame", mirror_frame()}};
}

// ---------------------------------------------------------------------------
// Validator

namespace detail {

inline bool has_type(const json& v, std::string_view t) {
  if (t == "null") return v.is_null();
  if (t == "boolean") return v.is_boolean();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  if (t == "string") return v.is_string();
  if (t == "array") return v.is_array();
  if (t == "object") return v.is_object();
  return false;
}

inline void fail(const std::string& where, const std::string& what) {
  throw SchemaError((where.empty() ? std::string("(root)") : where) + ": " + what);
}

inline void check(const json& v, const json& s, const std::string& where) {
  if (s.contains("type")) {
    const auto& t = s["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = has_type(v, t.get<std::string>());
    } else {
      for (const auto& alt : t) ok = ok || has_type(v, alt.get<std::string>());
    }
    if (!ok) fail(where, "expected type " + t.dump() + ", got " + v.dump());
  }
  if (s.contains("const") && v != s["const"]) fail(where, "expected " + s["const"].dump());
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) fail(where, v.dump() + " not in " + s["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) fail(where, "below minimum");
    if (s.contains("maximum") && x > s["maximum"].get<double>()) fail(where, "above maximum");
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
      fail(where, "not above exclusive minimum");
    if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
      fail(where, "not below exclusive maximum");
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& k : s["required"])
        if (!v.contains(k.get<std::string>())) fail(where, "missing required " + k.get<std::string>());
    const json props = s.value("properties", json::object());
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string sub = where.empty() ? it.key() : where + "." + it.key();
      if (props.contains(it.key())) {
        check(it.value(), props[it.key()], sub);
      } else if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
        fail(sub, "unexpected property");
      }
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) fail(where, "too few items");
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) fail(where, "too many items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i)
        check(v[i], s["items"], where + "[" + std::to_string(i) + "]");
  }
}

}  // namespace detail

/// Throws SchemaError naming the first offending location.
inline void validate(const json& value, const json& schema) { detail::check(value, schema, ""); }

inline bool is_valid(const json& value, const json& schema) {
  try {
    validate(value, schema);
    return true;
  } catch (const SchemaError&) {
    return false;
  }
}

}  // namespace jatrain::schema
