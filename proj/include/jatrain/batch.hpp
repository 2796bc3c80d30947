// batch.hpp
//
// Study files and batch execution. A study file lists cohorts (one per
// group), each with its setups and behaviour templates, plus SessionConfig
// overrides shared by every session:
//
//   {
//     "seed": 2024,
//     "config": { "trials_per_session": 2 },
//     "cohorts": [
//       { "group": "ASD", "n_participants": 16,
//         "setups": [ { "setup": "VR", "profile": "ASD_VR" },
//                     { "setup": "AR", "profile": "ASD_AR" } ] },
//       { "group": "NT" }
//     ]
//   }
//
// A cohort entry for ASD or NT starts from that group's defaults, so only
// differences need listing. "profile" is a preset name or an inline
// profile object (optionally {"base": "<preset>", ...overrides}).
//
// Every session's seed is derived from the study seed and the session's file
// stem, so a log does not depend on which other sessions ran alongside it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "jatrain/error.hpp"
#include "jatrain/json_io.hpp"
#include "jatrain/participant_sim.hpp"
#include "jatrain/runner.hpp"
#include "jatrain/store.hpp"

namespace jatrain {

struct StudySpec {
  std::uint64_t seed = 0;
  SessionConfig config;
  std::vector<CohortSpec> cohorts;
};

/// Derived seeds stay below 2^53 so JSON clients that store numbers as
/// doubles (browsers) read them back exactly.
inline constexpr std::uint64_t kJsonSafeSeedMask = (std::uint64_t{1} << 53) - 1;

/// FNV-1a, for stable string-derived seed tags.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline MeanSd mean_sd_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  MeanSd m;
  m.mean = r.req<double>("mean");
  m.sd = r.req<double>("sd");
  r.finish();
  return m;
}

inline json to_json(const MeanSd& m) { return json{{"mean", m.mean}, {"sd", m.sd}}; }

inline CohortSpec cohort_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  const auto group = r.req<std::string>("group");
  CohortSpec c;
  if (group == "ASD" || group == "NT") {
    c = default_cohort(group);
  } else {
    throw ConfigError(r.field("group"), "expected ASD or NT");
  }
  r.maybe("n_participants", c.n_participants);
  if (auto d = r.opt<std::string>("design")) {
    try {
      c.design = cohort_design_from_string(*d);
    } catch (const ConfigError& e) {
      throw ConfigError(r.field("design"), e.reason());
    }
  }
  r.maybe("avatar_latency_variability", c.avatar_latency_variability);
  r.maybe("object_latency_variability", c.object_latency_variability);
  if (r.has("age")) c.age = mean_sd_from_json(r.raw("age"), r.field("age"));
  else r.opt<double>("age");
  if (r.has("cars")) c.cars = mean_sd_from_json(r.raw("cars"), r.field("cars"));
  else r.opt<double>("cars");
  r.maybe("age_min", c.age_min);
  r.maybe("age_max", c.age_max);
  if (r.has("setups")) {
    const auto& arr = r.raw("setups");
    if (!arr.is_array()) throw ConfigError(r.field("setups"), "expected an array");
    c.setups.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = r.field("setups") + "[" + std::to_string(i) + "]";
      ObjectReader s(arr[i], where);
      SetupTemplate t;
      t.setup = s.req<std::string>("setup");
      t.profile = profile_from_json(s.raw("profile"), s.field("profile"));
      s.maybe("cars_coupling", t.cars_coupling);
      s.finish();
      c.setups.push_back(std::move(t));
    }
  } else {
    r.opt<double>("setups");
  }
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + e.field(), e.reason());
  }
  return c;
}

inline json to_json(const CohortSpec& c) {
  json setups = json::array();
  for (const auto& s : c.setups)
    setups.push_back(json{{"setup", s.setup}, {"profile", to_json(s.profile)}, {"cars_coupling", s.cars_coupling}});
  return json{{"group", c.group},
              {"n_participants", c.n_participants},
              {"design", std::string(to_string(c.design))},
              {"avatar_latency_variability", c.avatar_latency_variability},
              {"object_latency_variability", c.object_latency_variability},
              {"age", to_json(c.age)},
              {"cars", to_json(c.cars)},
              {"age_min", c.age_min},
              {"age_max", c.age_max},
              {"setups", std::move(setups)}};
}

inline StudySpec study_from_json(const json& j) {
  ObjectReader r(j, "");
  StudySpec s;
  if (auto v = r.opt<std::string>("schema_version"); v && *v != kSchemaVersion)
    throw ConfigError("schema_version", "unsupported schema version");
  r.maybe("seed", s.seed);
  if (r.has("config")) s.config = session_config_from_json(r.raw("config"));
  else r.opt<double>("config");
  const auto& cohorts = r.raw("cohorts");
  if (!cohorts.is_array() || cohorts.empty()) throw ConfigError("cohorts", "expected a non-empty array");
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    auto c = cohort_from_json(cohorts[i], "cohorts[" + std::to_string(i) + "]");
    for (const auto& prev : s.cohorts)
      if (prev.group == c.group)
        throw ConfigError("cohorts[" + std::to_string(i) + "].group", "duplicate group " + c.group);
    s.cohorts.push_back(std::move(c));
  }
  r.finish();
  return s;
}

inline json to_json(const StudySpec& s) {
  json cohorts = json::array();
  for (const auto& c : s.cohorts) cohorts.push_back(to_json(c));
  return json{{"schema_version", std::string(kSchemaVersion)},
              {"seed", s.seed},
              {"config", to_json(s.config)},
              {"cohorts", std::move(cohorts)}};
}

inline StudySpec load_study(const fs::path& path) {
  return study_from_json(parse_json_text(read_file(path), path.string()));
}

/// The 16 ASD + 13 NT design, both setups, with default presets.
inline StudySpec default_study(std::uint64_t seed = 2024) {
  StudySpec s;
  s.seed = seed;
  s.cohorts = {default_cohort("ASD"), default_cohort("NT")};
  return s;
}

// ---------------------------------------------------------------------------

struct PlannedSession {
  std::string stem;  // {group}_{setup}_{participant_id}
  std::string setup;
  SessionConfig config;
  ParticipantMeta participant;
  BehaviorProfile profile;
  std::vector<TrialPlan> plan;
};

/// Expands a study into its sessions, in cohort / setup / participant order.
inline std::vector<PlannedSession> plan_study(const StudySpec& study) {
  std::vector<PlannedSession> out;
  for (CohortSpec cohort : study.cohorts) {
    cohort.seed = derive_seed(study.seed, fnv1a("cohort:" + cohort.group));
    cohort.trials_per_participant = study.config.trials_per_session;
    const auto people = make_cohort(cohort);
    for (const auto& setup : cohort.setups) {
      for (const auto& p : people) {
        PlannedSession ps;
        ps.stem = cohort.group + "_" + setup.setup + "_" + p.meta.id;
        ps.setup = setup.setup;
        ps.config = study.config;
        ps.config.rng_seed = derive_seed(study.seed, fnv1a(ps.stem)) & kJsonSafeSeedMask;
        ps.participant = p.meta;
        ps.profile = p.profiles.at(setup.setup);
        if (auto it = p.plans.find(setup.setup); it != p.plans.end()) ps.plan = it->second;
        out.push_back(std::move(ps));
      }
    }
  }
  return out;
}

struct BatchOptions {
  std::optional<std::uint64_t> seed;  // overrides the study seed
  bool fast = true;
  double time_scale = 1.0;  // real-time mode only
};

struct BatchResult {
  std::vector<fs::path> paths;
  std::vector<SessionLog> logs;
};

inline BatchResult run_batch(StudySpec study, const fs::path& out_dir, const BatchOptions& opt = {}) {
  if (opt.seed) study.seed = *opt.seed;
  if (opt.fast) study.config.timing_mode = TimingMode::fast;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir.string());

  BatchResult result;
  const Scene scene = Scene::standard();
  for (const auto& ps : plan_study(study)) {
    SessionLog log;
    if (ps.config.timing_mode == TimingMode::fast) {
      log = run_simulated_session(ps.stem, ps.setup, ps.config, ps.participant, ps.profile, ps.plan, scene);
    } else {
      Session session(ps.config, ps.participant, scene);
      GazeGenerator gen(ps.profile, scene, generator_seed(ps.config.rng_seed), ps.plan);
      WallClock clock(opt.time_scale);
      SessionRunner(ps.stem, session, gen, clock).run();
      log = session.finalize();
      log.session_id = ps.stem;
      log.setup = ps.setup;
      log.profile = ps.profile.name;
    }
    const fs::path path = out_dir / (ps.stem + ".json");
    store_log(log, path);
    result.paths.push_back(path);
    result.logs.push_back(std::move(log));
  }
  return result;
}

}  // namespace jatrain
