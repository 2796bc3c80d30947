#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "jatrain/calibration.hpp"
#include "jatrain/participant_sim.hpp"
#include "jatrain/runner.hpp"
#include "support.hpp"

using namespace jatrain;

namespace {

BehaviorProfile ideal_profile() {
  BehaviorProfile p;
  p.orient_latency_to_avatar = {1.0, 0.0};
  p.orient_latency_to_object = {1.0, 0.0};
  p.follow_prob = 1.0;
  p.gaze_noise_sd = 0.0;
  p.dropout_rate = 0.0;
  p.mid_dwell_break_rate = 0.0;
  return p;
}

ParticipantMeta meta() { return {"P01", "NT", 10.0, 8.0, true}; }

std::vector<TrialRecord> pooled_trials(const BehaviorProfile& p, int sessions, std::uint64_t seed,
                                       SessionConfig base = {}) {
  std::vector<TrialRecord> out;
  for (int i = 0; i < sessions; ++i) {
    base.rng_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const auto log = run_simulated_session("s", "sim", base, meta(), p);
    out.insert(out.end(), log.trials.begin(), log.trials.end());
  }
  return out;
}

double median_s(const std::vector<TrialRecord>& t, bool rr) {
  std::vector<double> v;
  for (const auto& r : t)
    if (r.completed) v.push_back(seconds(rr ? *r.t_rr_ms : *r.t_ec_ms));
  return median_of(v);
}

}  // namespace

TEST_CASE("ideal participant hits the metric floors", "[sim]") {
  const auto p = ideal_profile();
  const auto trials = pooled_trials(p, 50, 1);
  const TimeMs period = static_cast<TimeMs>(std::ceil(1000.0 / p.sample_rate_hz));
  REQUIRE(trials.size() == 100);
  for (const auto& t : trials) {
    REQUIRE(t.completed);
    CHECK(*t.correct);
    CHECK(*t.t_ec_ms >= 2000);
    CHECK(*t.t_ec_ms <= 2000 + period);
    CHECK(*t.t_rr_ms >= 2000);
    CHECK(*t.t_rr_ms <= 2000 + period);
  }
}

TEST_CASE("follow_prob 0 makes every response incorrect", "[sim]") {
  auto p = ideal_profile();
  p.follow_prob = 0.0;
  int responded = 0;
  for (const auto& t : pooled_trials(p, 50, 2)) {
    if (!t.correct) continue;
    ++responded;
    CHECK_FALSE(*t.correct);
  }
  CHECK(responded == 100);
}

TEST_CASE("response time composes latency and dwell", "[sim]") {
  BehaviorProfile p;
  p.orient_latency_to_avatar = {500.0, 0.3};
  p.orient_latency_to_object = {3000.0, 0.3};
  p.mid_dwell_break_rate = 0.0;
  const double m = median_s(pooled_trials(p, 250, 3), true);
  CHECK(m == Catch::Approx(5.0).epsilon(0.10));
}

TEST_CASE("presets reproduce their target medians", "[sim]") {
  for (const auto& target : kPresetTargets) {
    const auto trials = pooled_trials(preset(target.name), 250, 4);
    INFO(target.name);
    CHECK(median_s(trials, false) == Catch::Approx(target.median_t_ec_s).epsilon(0.10));
    CHECK(median_s(trials, true) == Catch::Approx(target.median_t_rr_s).epsilon(0.10));
  }
  CHECK_THROWS_AS(preset("ASD_XR"), InputError);
}

TEST_CASE("ASD_VR correctness follows its follow probability", "[sim]") {
  auto p = preset("ASD_VR");
  REQUIRE(p.follow_prob == 0.695);
  int responded = 0, correct = 0;
  for (const auto& t : pooled_trials(p, 500, 5)) {
    if (!t.correct) continue;
    ++responded;
    correct += *t.correct;
  }
  REQUIRE(responded == 1000);
  CHECK(100.0 * correct / responded == Catch::Approx(69.5).margin(3.0));
}

TEST_CASE("empirical correctness converges to follow x response probability", "[sim][property]") {
  auto p = ideal_profile();
  p.follow_prob = 0.8;
  p.nonresponder_prob = 0.1;
  SessionConfig c;
  c.trials_per_session = 1;
  c.inactivity_timeout_ms = 30000;
  const int n = 2000;
  int correct = 0;
  for (const auto& t : pooled_trials(p, n, 6, c)) correct += t.correct.value_or(false);
  const double expect = 0.8 * 0.9;
  const double sd = std::sqrt(expect * (1 - expect) / n);
  CHECK(std::abs(correct / double(n) - expect) <= 3 * sd);
}

TEST_CASE("generated streams are strictly increasing on the rate grid", "[sim]") {
  for (double hz : {30.0, 60.0, 70.0, 90.0, 120.0, 250.0}) {
    BehaviorProfile p = preset("NT_VR");
    p.sample_rate_hz = hz;
    GazeGenerator g(p, Scene::standard(), 11);
    TimeMs prev = -1;
    for (int k = 0; k < 5000; ++k) {
      const auto s = g.next();
      REQUIRE(s.t_ms > prev);
      REQUIRE(s.t_ms == std::llround(k * 1000.0 / hz));
      prev = s.t_ms;
    }
  }
}

TEST_CASE("no object-directed gaze before the cue ends", "[sim][property]") {
  const Scene scene = Scene::standard();
  int object_samples = 0;
  for (int i = 0; i < 200; ++i) {
    SessionConfig c;
    c.rng_seed = derive_seed(7, static_cast<std::uint64_t>(i));
    const auto& names = preset_names();
    auto prof = preset(names[static_cast<std::size_t>(i) % names.size()]);
    Session s(c, meta(), scene);
    GazeGenerator g(prof, scene, generator_seed(c.rng_seed));
    while (!s.terminated()) {
      const TrialPhase before = s.phase();
      const bool cueing = before == TrialPhase::AwaitEyeContact || before == TrialPhase::CueHeadTurn ||
                          before == TrialPhase::CueFingerPoint;
      const auto sample = g.next();
      const bool on_object = sample.valid && (point_in_roi(sample, scene.roi(RoiId::object_left)) ||
                                              point_in_roi(sample, scene.roi(RoiId::object_right)));
      if (cueing) REQUIRE_FALSE(on_object);
      object_samples += on_object;
      g.observe(s.step(sample));
    }
  }
  CHECK(object_samples > 0);
}

TEST_CASE("slower latencies give slower metrics", "[sim][property]") {
  const auto base = preset("NT_AR");
  double prev_rr = 0.0, prev_ec = 0.0;
  for (double scale : {0.5, 1.0, 2.0, 4.0}) {
    auto p = base;
    p.orient_latency_to_avatar.median_ms *= scale;
    p.orient_latency_to_object.median_ms *= scale;
    const auto m = simulate_profile(p, 200, 8);
    CHECK(m.median_t_ec_s > prev_ec);
    CHECK(m.median_t_rr_s > prev_rr);
    prev_ec = m.median_t_ec_s;
    prev_rr = m.median_t_rr_s;
  }
}

TEST_CASE("profile validation names the field", "[sim]") {
  auto field = [](auto mutate) {
    auto p = preset("NT_VR");
    mutate(p);
    try {
      p.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CHECK(field([](BehaviorProfile& p) { p.follow_prob = 1.2; }) == "follow_prob");
  CHECK(field([](BehaviorProfile& p) { p.sample_rate_hz = 20; }) == "sample_rate_hz");
  CHECK(field([](BehaviorProfile& p) { p.orient_latency_to_object.median_ms = 0; }) ==
        "orient_latency_to_object.median_ms");
  CHECK(field([](BehaviorProfile&) {}) == "<none>");
}

TEST_CASE("cohorts are deterministic under the seed", "[sim]") {
  auto spec = default_cohort("ASD");
  spec.seed = 31;
  const auto a = make_cohort(spec), b = make_cohort(spec);
  REQUIRE(a.size() == 16);
  CHECK(a == b);
  spec.seed = 32;
  CHECK_FALSE(make_cohort(spec) == a);
  for (const auto& p : a) {
    CHECK(p.meta.group == "ASD");
    CHECK(p.meta.age_years >= spec.age_min);
    CHECK(p.meta.age_years <= spec.age_max);
    CHECK(p.profiles.size() == 2);
  }
}

TEST_CASE("stratified cohorts deal exact outcome counts and antithetic latencies", "[sim]") {
  auto spec = default_cohort("ASD");
  spec.seed = 5;
  const auto people = make_cohort(spec);
  int follow_vr = 0;
  std::vector<double> mult;
  for (const auto& p : people) {
    mult.push_back(std::log(p.avatar_multiplier));
    const auto& plan = p.plans.at("VR");
    REQUIRE(plan.size() == 2);
    CHECK(*plan[0].avatar_latency_z == Catch::Approx(-*plan[1].avatar_latency_z));
    CHECK(*plan[0].object_latency_z == Catch::Approx(-*plan[1].object_latency_z));
    for (const auto& t : plan) follow_vr += *t.follow;
  }
  CHECK(follow_vr == std::llround(0.695 * 32));
  // Log multipliers sit on symmetric quantiles, so they average to zero.
  CHECK(std::accumulate(mult.begin(), mult.end(), 0.0) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("single-participant cohort keeps the template", "[sim]") {
  auto spec = default_cohort("NT");
  spec.n_participants = 1;
  spec.seed = 3;
  const auto people = make_cohort(spec);
  REQUIRE(people.size() == 1);
  const auto& p = people[0];
  const auto& tmpl = spec.setups[0].profile;
  const auto& got = p.profiles.at(spec.setups[0].setup);
  CHECK(got.orient_latency_to_avatar.median_ms ==
        Catch::Approx(tmpl.orient_latency_to_avatar.median_ms * p.avatar_multiplier));
  CHECK(got.orient_latency_to_object.median_ms ==
        Catch::Approx(tmpl.orient_latency_to_object.median_ms * p.object_multiplier));
  CHECK(p.avatar_multiplier == Catch::Approx(1.0));

  spec.design = CohortDesign::iid;
  const auto q = make_cohort(spec);
  CHECK(q[0].profiles.at("VR").orient_latency_to_avatar.median_ms ==
        Catch::Approx(spec.setups[0].profile.orient_latency_to_avatar.median_ms * q[0].avatar_multiplier));
  CHECK(q[0].plans.empty());
}

TEST_CASE("NT cohort attributes follow the group distribution", "[sim]") {
  auto spec = default_cohort("NT");
  spec.n_participants = 4000;
  spec.seed = 17;
  double sum = 0, sq = 0;
  for (const auto& p : make_cohort(spec)) {
    CHECK(p.meta.cars_score >= 0.0);
    CHECK(std::fmod(p.meta.cars_score * 2.0, 1.0) == 0.0);
    sum += p.meta.cars_score;
    sq += p.meta.cars_score * p.meta.cars_score;
  }
  const double mean = sum / 4000, sd = std::sqrt(sq / 4000 - mean * mean);
  CHECK(mean == Catch::Approx(9.23).margin(0.6));
  CHECK(sd == Catch::Approx(5.58).margin(0.6));
}

TEST_CASE("cohort spec validation", "[sim]") {
  auto spec = default_cohort("ASD");
  spec.n_participants = 0;
  CHECK_THROWS_AS(make_cohort(spec), ConfigError);
  spec = default_cohort("ASD");
  spec.setups.clear();
  CHECK_THROWS_AS(make_cohort(spec), ConfigError);
  CHECK_THROWS_AS(default_cohort("XYZ"), InputError);
}

TEST_CASE("calibration converges from a perturbed start", "[sim]") {
  auto start = preset("NT_VR");
  start.orient_latency_to_avatar.median_ms *= 1.5;
  start.orient_latency_to_object.median_ms *= 0.6;
  CalibrationOptions opt;
  opt.sessions = 300;
  opt.tolerance = 0.02;
  const auto res = calibrate_preset(start, preset_target("NT_VR"), opt);
  CHECK(res.converged);
  CHECK(res.metrics.median_t_ec_s == Catch::Approx(3.75).epsilon(0.02));
  CHECK(res.metrics.median_t_rr_s == Catch::Approx(2.75).epsilon(0.02));
}
