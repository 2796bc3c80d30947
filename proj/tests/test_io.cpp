#include <catch_amalgamated.hpp>

#include <atomic>
#include <fstream>
#include <thread>

#include "jatrain/analysis.hpp"
#include "jatrain/batch.hpp"
#include "jatrain/schema.hpp"
#include "jatrain/service.hpp"
#include "jatrain/store.hpp"
#include "support.hpp"

using namespace jatrain;
using test::TempDir;

namespace {

const fs::path kSource = JATRAIN_SOURCE_DIR;

SessionLog simulated(std::uint64_t seed, const std::string& profile = "NT_VR", SessionConfig c = {}) {
  c.rng_seed = seed;
  return run_simulated_session("S" + std::to_string(seed), "VR", c, {"P01", "NT", 9.5, 7.0, true}, preset(profile));
}

std::vector<std::string> files_in(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

TrialRecord responded(bool correct) {
  TrialRecord t;
  t.completed = true;
  t.t_ec_ms = 3000;
  t.t_rr_ms = 2500;
  t.correct = correct;
  t.responded_side = t.target_side;
  return t;
}

SessionLog handmade(const std::string& group, const std::string& setup, int n_trials, int n_correct) {
  SessionLog log;
  log.session_id = group + setup;
  log.setup = setup;
  log.participant = {"P01", group, 10.0, 20.0, true};
  for (int i = 0; i < n_trials; ++i) log.trials.push_back(responded(i < n_correct));
  log.aggregates = aggregate_trials(log.trials);
  return log;
}

}  // namespace

TEST_CASE("canonical JSON layout", "[io]") {
  const json j = {{"b", 1}, {"a", {{"y_s", 1.5}, {"x", true}}}, {"t_s", -0.0}, {"list", {1, 2}}, {"n", nullptr}};
  const std::string text = canonical_dump(j);
  CHECK(text ==
        "{\n"
        "  \"a\": {\n"
        "    \"x\": true,\n"
        "    \"y_s\": 1.500\n"
        "  },\n"
        "  \"b\": 1,\n"
        "  \"list\": [\n"
        "    1,\n"
        "    2\n"
        "  ],\n"
        "  \"n\": null,\n"
        "  \"t_s\": 0.000\n"
        "}\n");
  CHECK(canonical_dump(json::parse(text)) == text);
}

TEST_CASE("session logs round-trip through storage", "[io]") {
  TempDir dir("roundtrip");
  SessionConfig stop_early;
  stop_early.inactivity_timeout_ms = 3000;
  std::vector<SessionLog> logs{simulated(1), simulated(2, "ASD_AR"), simulated(3, "ASD_VR", stop_early)};
  logs[0].feedback = "participant removed headset \"early\"";
  for (const auto& log : logs) {
    const auto path = dir.path() / (log.session_id + ".json");
    store_log(log, path);
    const std::string text = read_file(path);
    CHECK(text.back() == '\n');
    const json j = json::parse(text);
    CHECK(j["schema_version"] == "1");
    CHECK(schema::is_valid(j, schema::session_log()));
    CHECK(load_log(path) == log);
  }
  CHECK(logs[2].termination_reason == TerminationReason::inactivity_timeout);
  CHECK(files_in(dir.path()).size() == 3);  // no temp files left behind
}

TEST_CASE("logs differing only in seed serialize differently", "[io]") {
  CHECK(log_text(simulated(10)) != log_text(simulated(11)));
  CHECK(log_text(simulated(10)) == log_text(simulated(10)));
}

TEST_CASE("schema validation rejects malformed documents", "[io]") {
  const json good = to_json(simulated(4));
  REQUIRE_NOTHROW(schema::validate(good, schema::session_log()));

  auto broken = good;
  broken.erase("trials");
  CHECK_FALSE(schema::is_valid(broken, schema::session_log()));
  broken = good;
  broken["termination_reason"] = "crashed";
  CHECK_FALSE(schema::is_valid(broken, schema::session_log()));
  broken = good;
  broken["extra"] = 1;
  CHECK_FALSE(schema::is_valid(broken, schema::session_log()));
  broken = good;
  broken["trials"][0]["t_ec_s"] = "slow";
  CHECK_FALSE(schema::is_valid(broken, schema::session_log()));
  broken = good;
  broken["config"]["trials_per_session"] = 0;
  CHECK_FALSE(schema::is_valid(broken, schema::session_log()));
  try {
    schema::validate(broken, schema::session_log());
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("trials_per_session") != std::string::npos);
  }
}

TEST_CASE("published schema files match the built-in schemas", "[io]") {
  const auto all = schema::all();
  CHECK(all.size() == 4);
  for (const auto& [stem, s] : all) {
    const auto path = kSource / "schemas" / (stem + ".schema.json");
    INFO(path);
    REQUIRE(fs::exists(path));
    CHECK(read_file(path) == canonical_dump(s));
  }
}

TEST_CASE("shipped data files are consistent with the library", "[io]") {
  const json presets = json::parse(read_file(kSource / "data" / "presets.json"));
  for (const auto& name : preset_names()) CHECK(profile_from_json(presets.at(name)) == preset(name));

  const auto study = load_study(kSource / "data" / "cohort_default.json");
  const auto def = default_study(2024);
  CHECK(study.seed == def.seed);
  CHECK(study.config == def.config);
  const auto a = plan_study(study), b = plan_study(def);
  REQUIRE(a.size() == 58);
  REQUIRE(b.size() == 58);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].stem == b[i].stem);
    CHECK(a[i].config == b[i].config);
    CHECK(a[i].profile == b[i].profile);
    CHECK(a[i].participant == b[i].participant);
  }

  const auto svc = service_config_from_json(json::parse(read_file(kSource / "data" / "service.json")));
  CHECK(svc.session_defaults.trials_per_session == 2);
}

TEST_CASE("config parsing names the offending field", "[io]") {
  auto field = [](const std::string& text) {
    try {
      session_config_from_json(json::parse(text));
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CHECK(field(R"({"trials_per_session": 0})") == "config.trials_per_session");
  CHECK(field(R"({"trials_per_session": "two"})") == "config.trials_per_session");
  CHECK(field(R"({"cue_duration_s": 5})") == "config.cue_duration_s");
  CHECK(field(R"({"timing_mode": "slow"})") == "config.timing_mode");
  CHECK(field(R"({"rng_seed": -1})") == "config.rng_seed");
  CHECK(field(R"({"trials_per_session": 3, "head_turn_fraction": 0.5})") == "<none>");
  CHECK(field(R"([1, 2])") != "<none>");

  const auto c = session_config_from_json(json::parse(R"({"trials_per_session": 3})"));
  CHECK(c.trials_per_session == 3);
  CHECK(c.cue_duration_ms == 5000);
  CHECK(session_config_from_json(to_json(c)) == c);
  CHECK_THROWS_AS(parse_json_text("{not json", "input"), ConfigError);
}

TEST_CASE("study file errors", "[io]") {
  CHECK_THROWS_AS(study_from_json(json::parse(R"({"cohorts": []})")), ConfigError);
  CHECK_THROWS_AS(study_from_json(json::parse(R"({"cohorts": [{"group": "XX"}]})")), ConfigError);
  CHECK_THROWS_AS(study_from_json(json::parse(R"({"cohorts": [{"group": "NT"}, {"group": "NT"}]})")), ConfigError);
  try {
    study_from_json(json::parse(R"({"cohorts": [{"group": "ASD", "n_participants": 0}]})"));
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.field().rfind("cohorts[0]", 0) == 0);
  }
  const auto s = study_from_json(json::parse(
      R"({"seed": 5, "cohorts": [{"group": "ASD", "n_participants": 3,
           "setups": [{"setup": "VR", "profile": {"base": "ASD_VR", "follow_prob": 0.5}}]}]})"));
  REQUIRE(s.cohorts.size() == 1);
  CHECK(s.cohorts[0].setups[0].profile.follow_prob == 0.5);
  CHECK(s.cohorts[0].setups[0].profile.orient_latency_to_avatar == preset("ASD_VR").orient_latency_to_avatar);
  CHECK(study_from_json(to_json(s)).cohorts[0] == s.cohorts[0]);
}

TEST_CASE("single-participant batch writes one log per setup", "[io][batch]") {
  TempDir dir("batch1");
  StudySpec s;
  s.seed = 9;
  auto c = default_cohort("ASD");
  c.n_participants = 1;
  s.cohorts = {c};
  const auto res = run_batch(s, dir.path());
  CHECK(res.paths.size() == 2);
  CHECK(files_in(dir.path()) == std::vector<std::string>{"ASD_AR_P01.json", "ASD_VR_P01.json"});
}

TEST_CASE("full batch is byte-identical under a fixed seed", "[io][batch]") {
  TempDir a("batchA"), b("batchB"), other("batchC");
  const auto ra = run_batch(default_study(), a.path());
  run_batch(default_study(), b.path());
  BatchOptions opt;
  opt.seed = 2025;
  run_batch(default_study(), other.path(), opt);
  const auto names = files_in(a.path());
  REQUIRE(names.size() == 58);
  CHECK(names == files_in(b.path()));
  int differing = 0;
  for (const auto& n : names) {
    CHECK(read_file(a.path() / n) == read_file(b.path() / n));
    differing += read_file(a.path() / n) != read_file(other.path() / n);
  }
  CHECK(differing == 58);
  CHECK(load_logs(a.path()).size() == 58);
  for (const auto& log : ra.logs) {
    CHECK(log.config.rng_seed <= kJsonSafeSeedMask);
    CHECK(log.termination_reason == TerminationReason::completed);
  }
}

TEST_CASE("batch output directory errors", "[io][batch]") {
  TempDir dir("batchErr");
  const auto file = dir.path() / "not_a_dir";
  atomic_write(file, "x");
  CHECK_THROWS_AS(run_batch(default_study(), file / "sub"), IoError);
  CHECK_THROWS_AS(atomic_write(dir.path() / "missing" / "f.json", "x"), IoError);
}

TEST_CASE("atomic writes never expose partial content", "[io][stress]") {
  TempDir dir("atomic");
  const auto path = dir.path() / "payload.json";
  atomic_write(path, canonical_dump(json{{"seq", 0}, {"blob", ""}}));
  std::atomic<bool> done{false};
  std::atomic<int> reads{0}, bad{0};
  std::thread reader([&] {
    while (!done) {
      std::ifstream in(path);
      std::stringstream ss;
      ss << in.rdbuf();
      const auto j = json::parse(ss.str(), nullptr, false);
      if (j.is_discarded() || j["blob"].get<std::string>().size() != 1000u * (j["seq"].get<std::size_t>() % 50))
        ++bad;
      ++reads;
    }
  });
  for (int i = 1; i <= 1500; ++i)
    atomic_write(path, canonical_dump(json{{"seq", i}, {"blob", std::string(1000u * (i % 50), 'x')}}));
  done = true;
  reader.join();
  CHECK(bad == 0);
  CHECK(reads > 0);
  CHECK(files_in(dir.path()) == std::vector<std::string>{"payload.json"});
}

TEST_CASE("aggregate metrics pool response counts", "[analysis]") {
  const std::vector<SessionLog> logs{handmade("ASD", "AR", 13, 13), handmade("ASD", "AR", 13, 11)};
  CHECK(*logs[1].aggregates.c_pr_percent == Catch::Approx(84.615).margin(1e-3));
  const auto t = aggregate_metrics(logs);
  REQUIRE(t.rows.size() == 1);
  CHECK(*t.rows[0].c_pr_percent == Catch::Approx(92.308).margin(1e-9));
  CHECK(t.rows[0].responded == 26);
  CHECK_THROWS_AS(aggregate_metrics({}), InputError);

  const auto per_p = aggregate_metrics(logs, Grouping::per_participant);
  CHECK(*per_p.rows[0].c_pr_percent == Catch::Approx(92.308).margin(1e-3));
}

TEST_CASE("single-log metrics equal the log's own aggregates", "[analysis]") {
  const auto log = simulated(21);
  for (auto g : {Grouping::per_trial, Grouping::per_participant}) {
    const auto t = aggregate_metrics({log}, g);
    REQUIRE(t.rows.size() == 1);
    const auto& r = t.rows[0];
    CHECK(r.median_t_ec_s == log.aggregates.median_t_ec_s);
    CHECK(r.median_t_rr_s == log.aggregates.median_t_rr_s);
    CHECK(r.c_pr_percent == log.aggregates.c_pr_percent);
    if (g == Grouping::per_trial) {
      CHECK(r.mean_t_ec_s == log.aggregates.mean_t_ec_s);
      CHECK(r.mean_t_rr_s == log.aggregates.mean_t_rr_s);
    }
  }
}

TEST_CASE("missing groups become explicit omissions", "[analysis]") {
  const std::vector<SessionLog> logs{handmade("ASD", "VR", 4, 3), handmade("ASD", "VR", 4, 4)};
  const auto rep = analysis_report(logs);
  CHECK(rep.differences.empty());
  int mw_omitted = 0;
  for (const auto& o : rep.omissions) mw_omitted += o.analysis.rfind("mann_whitney", 0) == 0;
  CHECK(mw_omitted == 2);
  const json j = to_json(rep);
  CHECK(j["omissions"].size() == rep.omissions.size());

  const auto nt_only = analysis_report({handmade("NT", "AR", 2, 2)});
  bool spearman_omitted = false;
  for (const auto& o : nt_only.omissions) spearman_omitted |= o.analysis == "spearman";
  CHECK(spearman_omitted);
}

TEST_CASE("CARS-coupled latency yields a positive correlation", "[analysis]") {
  TempDir dir("cars");
  StudySpec s;
  s.seed = 12;
  auto asd = default_cohort("ASD");
  asd.setups = {{"VR", preset("ASD_VR"), 0.8}};
  s.cohorts = {asd, default_cohort("NT")};
  const auto res = run_batch(s, dir.path());
  const auto rep = analysis_report(res.logs);
  const Correlation* found = nullptr;
  for (const auto& c : rep.correlations)
    if (c.setup == "VR" && c.metric == Metric::t_rr && c.attribute == "cars") found = &c;
  REQUIRE(found);
  CHECK(*found->result.rho > 0.3);
}

TEST_CASE("preset ASD_AR cohort mean T_EC is near 42 s", "[analysis]") {
  TempDir dir("mean-tec");
  const auto result = run_batch(default_study(2024), dir.path());
  const auto* row = aggregate_metrics(result.logs).find("ASD", "AR");
  REQUIRE(row);
  REQUIRE(row->mean_t_ec_s);
  CHECK(*row->mean_t_ec_s == Catch::Approx(42.0).epsilon(0.10));
  CHECK(*row->mean_t_ec_s > *row->median_t_ec_s);
}

TEST_CASE("analysis files are written", "[analysis]") {
  TempDir logs("alogs"), out("aout");
  run_batch(default_study(7), logs.path());
  const auto loaded = load_logs(logs.path());
  const auto files = write_analysis(loaded, Grouping::per_trial, out.path());
  CHECK(files_in(out.path()) == std::vector<std::string>{"metrics.csv", "metrics.json", "report.json", "series.csv"});
  const json rep = json::parse(read_file(out.path() / "report.json"));
  CHECK(rep["group_differences"].size() == 4);
  CHECK(rep["grouping"] == "per_trial");
  const std::string csv = read_file(out.path() / "metrics.csv");
  CHECK(csv.find("ASD,AR") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(grouping_from_string("per_participant") == Grouping::per_participant);
  CHECK_THROWS_AS(grouping_from_string("per_site"), ConfigError);
}

// Writes example documents for the external schema cross-check.
TEST_CASE("write schema sample documents", "[samples]") {
  const fs::path dir = JATRAIN_SAMPLE_DIR;
  fs::create_directories(dir);
  std::size_t n = 0;
  auto put = [&](const std::string& stem, const json& j, const json& s) {
    REQUIRE(schema::is_valid(j, s));
    atomic_write(dir / (stem + "." + std::to_string(n++) + ".json"), canonical_dump(j));
  };
  const Scene scene = Scene::standard();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SessionConfig c;
    c.rng_seed = seed;
    Session session(c, {"P01", "ASD", 9.0, 31.5, true}, scene);
    GazeGenerator gen(preset("ASD_VR"), scene, generator_seed(seed));
    SimulatedClock clock;
    SessionRunner runner("sample", session, gen, clock);
    std::uint64_t seq = 0;
    int frames = 0;
    put("performance_payload", to_json(make_payload("sample", session, 0, seq++)), schema::performance_payload());
    RunnerHooks hooks;
    hooks.on_events = [&](std::span<const EngineEvent>, const Session& s, TimeMs now) {
      put("performance_payload", to_json(make_payload("sample", s, now, seq++)), schema::performance_payload());
    };
    hooks.on_frame = [&](const MirrorFrame& f) {
      if (frames++ % 40 == 0 || f.phase == "terminated") put("mirror_frame", to_json(f, scene), schema::mirror_frame());
    };
    runner.run(hooks);
    put("session_log", to_json(session.finalize()), schema::session_log());
    put("session_config", to_json(c), schema::session_config());
  }
  put("session_config", json::object(), schema::session_config());
}
