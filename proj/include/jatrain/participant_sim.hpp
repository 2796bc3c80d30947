// participant_sim.hpp
//
// Synthetic participants. A BehaviorProfile describes how a simulated child
// looks at the scene: log-normal orienting latencies toward the avatar's eyes
// (measured from stimulus onset) and toward an object (from cue end), the
// probability of following the cue, and tracker artefacts (spatial noise,
// dropped samples, dwell-breaking glances away).
//
// GazeGenerator runs closed-loop with a Session: it emits one sample per
// tick and learns about the trial only from the engine events it is shown,
// so it can never orient to an object before it has observed the cue end.

#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jatrain/error.hpp"
#include "jatrain/gaze.hpp"
#include "jatrain/rng.hpp"
#include "jatrain/trial_engine.hpp"

namespace jatrain {

struct LogNormal {
  double median_ms = 1000.0;
  double sigma = 0.0;

  friend bool operator==(const LogNormal&, const LogNormal&) = default;
};

struct BehaviorProfile {
  std::string name = "custom";
  LogNormal orient_latency_to_avatar{1000.0, 0.25};
  LogNormal orient_latency_to_object{1000.0, 0.25};
  double follow_prob = 1.0;
  double gaze_noise_sd = 0.03;
  double dropout_rate = 0.0;
  /// Per-second hazard of a glance away long enough to reset a dwell.
  double mid_dwell_break_rate = 0.0;
  double break_min_ms = 250.0;
  double break_max_ms = 1000.0;
  double sample_rate_hz = 70.0;
  double nonresponder_prob = 0.0;

  void validate() const {
    auto prob = [](double p, const char* field) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(field, "must lie in [0, 1]");
    };
    auto latency = [](const LogNormal& d, const std::string& field) {
      if (!(d.median_ms > 0.0)) throw ConfigError(field + ".median_ms", "must be > 0");
      if (!(d.sigma >= 0.0)) throw ConfigError(field + ".sigma", "must be >= 0");
    };
    latency(orient_latency_to_avatar, "orient_latency_to_avatar");
    latency(orient_latency_to_object, "orient_latency_to_object");
    prob(follow_prob, "follow_prob");
    prob(dropout_rate, "dropout_rate");
    prob(nonresponder_prob, "nonresponder_prob");
    if (!(gaze_noise_sd >= 0.0)) throw ConfigError("gaze_noise_sd", "must be >= 0");
    if (!(mid_dwell_break_rate >= 0.0)) throw ConfigError("mid_dwell_break_rate", "must be >= 0");
    if (!(break_min_ms > 0.0 && break_max_ms >= break_min_ms))
      throw ConfigError("break_min_ms", "need 0 < break_min_ms <= break_max_ms");
    if (!(sample_rate_hz >= 30.0)) throw ConfigError("sample_rate_hz", "must be >= 30");
  }

  friend bool operator==(const BehaviorProfile&, const BehaviorProfile&) = default;
};

/// Pre-drawn per-trial decisions. Unset fields fall back to the profile's
/// probabilities; a latency z replaces the standard-normal draw of the
/// corresponding log-normal latency.
struct TrialPlan {
  std::optional<bool> follow;
  std::optional<bool> respond;
  std::optional<double> avatar_latency_z;
  std::optional<double> object_latency_z;

  friend bool operator==(const TrialPlan&, const TrialPlan&) = default;
};

// ---------------------------------------------------------------------------
// Presets

/// Group-level medians (seconds) the presets are calibrated against.
struct PresetTarget {
  std::string_view name;
  double median_t_ec_s;
  double median_t_rr_s;
  double follow_prob;
};

inline constexpr std::array<PresetTarget, 4> kPresetTargets{{
    {"NT_VR", 3.75, 2.75, 1.0},
    {"ASD_VR", 11.5, 13.5, 0.695},
    {"NT_AR", 7.0, 5.0, 1.0},
    {"ASD_AR", 35.0, 18.0, 0.923},
}};

inline const PresetTarget& preset_target(std::string_view name) {
  for (const auto& t : kPresetTargets)
    if (t.name == name) return t;
  throw InputError("unknown preset '" + std::string(name) + "'");
}

inline std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& t : kPresetTargets) out.emplace_back(t.name);
  return out;
}

/// Calibrated profiles. The latency medians come from `jatrain presets
/// calibrate` (see calibrate_preset below) and are mirrored in
/// data/presets.json.
inline BehaviorProfile preset(std::string_view name) {
  BehaviorProfile p;
  p.name = std::string(name);
  p.sample_rate_hz = 70.0;
  if (name == "NT_VR") {
    p.orient_latency_to_avatar = {1722.0, 0.10};
    p.orient_latency_to_object = {728.0, 0.10};
    p.follow_prob = 1.0;
    p.gaze_noise_sd = 0.025;
    p.dropout_rate = 0.01;
    p.mid_dwell_break_rate = 0.01;
  } else if (name == "ASD_VR") {
    p.orient_latency_to_avatar = {9359.0, 0.10};
    p.orient_latency_to_object = {11391.0, 0.10};
    p.follow_prob = 0.695;
    p.gaze_noise_sd = 0.03;
    p.dropout_rate = 0.015;
    p.mid_dwell_break_rate = 0.04;
  } else if (name == "NT_AR") {
    p.orient_latency_to_avatar = {4950.0, 0.10};
    p.orient_latency_to_object = {2952.0, 0.10};
    p.follow_prob = 1.0;
    p.gaze_noise_sd = 0.03;
    p.dropout_rate = 0.015;
    p.mid_dwell_break_rate = 0.01;
  } else if (name == "ASD_AR") {
    p.orient_latency_to_avatar = {32783.0, 0.10};
    p.orient_latency_to_object = {15872.0, 0.10};
    p.follow_prob = 0.923;
    p.gaze_noise_sd = 0.035;
    p.dropout_rate = 0.02;
    p.mid_dwell_break_rate = 0.04;
  } else {
    throw InputError("unknown preset '" + std::string(name) + "'");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Generator

class GazeGenerator {
 public:
  GazeGenerator(BehaviorProfile profile, Scene scene, std::uint64_t seed,
                std::vector<TrialPlan> plan = {})
      : profile_((profile.validate(), std::move(profile))),
        scene_(std::move(scene)),
        rng_(seed),
        plan_(std::move(plan)) {}

  /// Time of the k-th sample on this generator's fixed-rate grid.
  TimeMs sample_time(std::int64_t k) const {
    return std::llround(static_cast<double>(k) * 1000.0 / profile_.sample_rate_hz);
  }

  TimeMs next_sample_time() const { return sample_time(tick_); }

  GazeSample next() {
    const TimeMs t = sample_time(tick_);
    const TimeMs prev = tick_ > 0 ? sample_time(tick_ - 1) : t;
    ++tick_;

    GazeSample s{t, 0.0, 0.0, false};
    const Point p = gaze_point(t, t - prev);
    if (profile_.dropout_rate > 0.0 && rng_.bernoulli(profile_.dropout_rate)) return s;
    s.x = p.x;
    s.y = p.y;
    s.valid = true;
    return s;
  }

  void observe(const EngineEvent& ev) {
    if (const auto* e = std::get_if<TrialStarted>(&ev)) {
      const auto& plan = plan_for(e->trial_index);
      follow_ = plan.follow ? *plan.follow : rng_.bernoulli(profile_.follow_prob);
      respond_ = plan.respond ? *plan.respond : !rng_.bernoulli(profile_.nonresponder_prob);
      cued_side_ = e->objects.cued_side;
      orient_at_ = static_cast<double>(e->t_ms) + latency(profile_.orient_latency_to_avatar, plan.avatar_latency_z);
      object_z_ = plan.object_latency_z;
      mode_ = Mode::to_avatar;
      break_until_.reset();
    } else if (const auto* e = std::get_if<PhaseChanged>(&ev)) {
      if (e->to == TrialPhase::AwaitResponse) {
        orient_at_ = static_cast<double>(e->t_ms) + latency(profile_.orient_latency_to_object, object_z_);
        object_ = roi_for(follow_ ? cued_side_ : opposite(cued_side_));
        mode_ = respond_ ? Mode::to_object : Mode::wander;
      }
    } else if (std::holds_alternative<FeedbackGiven>(ev) ||
               std::holds_alternative<SessionTerminated>(ev)) {
      mode_ = Mode::wander;
    }
  }

  void observe(std::span<const EngineEvent> events) {
    for (const auto& ev : events) observe(ev);
  }

  const BehaviorProfile& profile() const noexcept { return profile_; }

 private:
  // wander: scatter clear of every region.
  // to_avatar: scatter until the avatar latency elapses, then fixate the eyes.
  // to_object: keep fixating the eyes until the object latency elapses, then
  //            fixate the chosen object.
  enum class Mode { wander, to_avatar, to_object };

  const TrialPlan& plan_for(int trial) const {
    static const TrialPlan kNone{};
    return trial >= 0 && static_cast<std::size_t>(trial) < plan_.size()
               ? plan_[static_cast<std::size_t>(trial)]
               : kNone;
  }

  double latency(const LogNormal& d, std::optional<double> z) {
    return z ? d.median_ms * std::exp(d.sigma * *z) : rng_.lognormal(d.median_ms, d.sigma);
  }

  Point gaze_point(TimeMs t, TimeMs dt) {
    const bool oriented = static_cast<double>(t) >= orient_at_;
    switch (mode_) {
      case Mode::wander: return idle_point();
      case Mode::to_avatar: return oriented ? fixate(RoiId::avatar_eyes, t, dt) : idle_point();
      case Mode::to_object: return fixate(oriented ? object_ : RoiId::avatar_eyes, t, dt);
    }
    return idle_point();
  }

  Point fixate(RoiId roi, TimeMs t, TimeMs dt) {
    if (break_until_) {
      if (t < *break_until_) return idle_point();
      break_until_.reset();
    }
    if (profile_.mid_dwell_break_rate > 0.0 && dt > 0 &&
        rng_.bernoulli(profile_.mid_dwell_break_rate * static_cast<double>(dt) / 1000.0)) {
      break_until_ = t + std::llround(rng_.uniform(profile_.break_min_ms, profile_.break_max_ms));
      return idle_point();
    }
    const Point c = roi_center(scene_.roi(roi));
    return {c.x + rng_.normal(0.0, profile_.gaze_noise_sd),
            c.y + rng_.normal(0.0, profile_.gaze_noise_sd)};
  }

  static Point roi_center(const Roi& roi) {
    if (const auto* c = std::get_if<Circle>(&roi.shape)) return c->center;
    const auto& r = std::get<Rect>(roi.shape);
    return {0.5 * (r.min.x + r.max.x), 0.5 * (r.min.y + r.max.y)};
  }

  /// Uniform scatter over the plane, kept clear of every region by a margin.
  Point idle_point() {
    constexpr double kMargin = 0.05;
    for (;;) {
      const Point p{rng_.uniform(-1.0, 1.0), rng_.uniform(-1.0, 1.0)};
      bool clear = true;
      for (const auto& roi : scene_.rois()) {
        if (near_roi(p, roi, kMargin)) {
          clear = false;
          break;
        }
      }
      if (clear) return p;
    }
  }

  static bool near_roi(Point p, const Roi& roi, double margin) {
    if (const auto* c = std::get_if<Circle>(&roi.shape)) {
      const double dx = p.x - c->center.x, dy = p.y - c->center.y;
      const double r = c->radius + margin;
      return dx * dx + dy * dy <= r * r;
    }
    const auto& r = std::get<Rect>(roi.shape);
    return p.x >= r.min.x - margin && p.x <= r.max.x + margin && p.y >= r.min.y - margin &&
           p.y <= r.max.y + margin;
  }

  BehaviorProfile profile_;
  Scene scene_;
  Rng rng_;
  std::vector<TrialPlan> plan_;
  std::int64_t tick_ = 0;

  Mode mode_ = Mode::wander;
  RoiId object_ = RoiId::object_left;
  double orient_at_ = 0.0;
  std::optional<TimeMs> break_until_;
  std::optional<double> object_z_;
  bool follow_ = true;
  bool respond_ = true;
  Side cued_side_ = Side::left;
};

// ---------------------------------------------------------------------------
// Cohorts

enum class CohortDesign {
  /// Participant multipliers sit on evenly spaced log-normal quantiles
  /// (randomly assigned), each participant's trial latencies scatter in
  /// antithetic pairs around the participant median, and cue-following /
  /// response outcomes are dealt from a shuffled deck sized to the profile's
  /// probabilities.
  stratified,
  /// Everything drawn independently.
  iid,
};

constexpr std::string_view to_string(CohortDesign d) {
  return d == CohortDesign::stratified ? "stratified" : "iid";
}

inline CohortDesign cohort_design_from_string(std::string_view s) {
  if (s == "stratified") return CohortDesign::stratified;
  if (s == "iid") return CohortDesign::iid;
  throw ConfigError("design", "expected 'stratified' or 'iid', got '" + std::string(s) + "'");
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;

  friend bool operator==(const MeanSd&, const MeanSd&) = default;
};

struct SetupTemplate {
  std::string setup;  // "VR", "AR", ...
  BehaviorProfile profile;
  /// Log-scale slope of object latency on the standardized CARS score.
  double cars_coupling = 0.0;

  friend bool operator==(const SetupTemplate&, const SetupTemplate&) = default;
};

struct CohortSpec {
  std::string group = "ASD";
  int n_participants = 16;
  std::vector<SetupTemplate> setups;
  /// Sigma of the per-participant log-normal latency multipliers.
  double avatar_latency_variability = 0.3;
  double object_latency_variability = 0.3;
  MeanSd age{9.46, 2.27};
  MeanSd cars{32.03, 2.87};
  double age_min = 6.0;
  double age_max = 13.0;
  int trials_per_participant = 2;
  CohortDesign design = CohortDesign::stratified;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_participants < 1) throw ConfigError("n", "n_participants must be >= 1");
    if (setups.empty()) throw ConfigError("setups", "at least one setup required");
    for (const auto& s : setups) s.profile.validate();
    if (!(avatar_latency_variability >= 0.0 && object_latency_variability >= 0.0))
      throw ConfigError("latency_variability", "must be >= 0");
    if (trials_per_participant < 1) throw ConfigError("trials_per_participant", "must be >= 1");
    if (!(age.sd >= 0.0 && cars.sd >= 0.0)) throw ConfigError("sd", "must be >= 0");
  }

  friend bool operator==(const CohortSpec&, const CohortSpec&) = default;
};

/// Default cohort sizes, age / CARS attributes (mean, sd) and latency spread.
inline CohortSpec default_cohort(std::string_view group) {
  CohortSpec c;
  c.group = std::string(group);
  if (group == "ASD") {
    c.n_participants = 16;
    c.age = {9.46, 2.27};
    c.cars = {32.03, 2.87};
    c.avatar_latency_variability = 0.6;
    c.object_latency_variability = 0.55;
    c.setups = {{"VR", preset("ASD_VR"), 0.0}, {"AR", preset("ASD_AR"), 0.0}};
  } else if (group == "NT") {
    c.n_participants = 13;
    c.age = {9.99, 2.32};
    c.cars = {9.23, 5.58};
    c.avatar_latency_variability = 0.3;
    c.object_latency_variability = 0.3;
    c.setups = {{"VR", preset("NT_VR"), 0.0}, {"AR", preset("NT_AR"), 0.0}};
  } else {
    throw InputError("no default cohort for group '" + std::string(group) + "'");
  }
  return c;
}

struct SyntheticParticipant {
  ParticipantMeta meta;
  double avatar_multiplier = 1.0;
  double object_multiplier = 1.0;
  std::map<std::string, BehaviorProfile> profiles;     // by setup
  std::map<std::string, std::vector<TrialPlan>> plans;  // by setup; empty for iid

  friend bool operator==(const SyntheticParticipant&, const SyntheticParticipant&) = default;
};

inline double normal_quantile(double u) {
  return std::numbers::sqrt2 * boost::math::erf_inv(2.0 * u - 1.0);
}

namespace detail {

/// exp(sigma * z_i) on midpoint quantiles of N(0,1), shuffled.
inline std::vector<double> stratified_multipliers(Rng& rng, int n, double sigma) {
  std::vector<double> m(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    m[static_cast<std::size_t>(i)] = std::exp(sigma * normal_quantile((i + 0.5) / n));
  rng.shuffle(std::span<double>(m));
  return m;
}

/// `k` standard-normal scores in antithetic pairs (z, -z), plus one free
/// draw when k is odd, in random order. Keeps a participant's trials centred
/// on the participant's own median.
inline std::vector<double> antithetic_scores(Rng& rng, int k) {
  std::vector<double> z;
  for (int i = 0; i + 1 < k; i += 2) {
    const double v = rng.normal();
    z.push_back(v);
    z.push_back(-v);
  }
  if (k % 2 == 1) z.push_back(rng.normal());
  rng.shuffle(std::span<double>(z));
  return z;
}

/// round(p * slots) true values dealt at random positions.
inline std::vector<bool> dealt_outcomes(Rng& rng, std::size_t slots, double p) {
  const auto k = static_cast<std::size_t>(std::llround(p * static_cast<double>(slots)));
  std::vector<char> deck(slots, 0);
  std::fill(deck.begin(), deck.begin() + static_cast<std::ptrdiff_t>(std::min(k, slots)), 1);
  rng.shuffle(std::span<char>(deck));
  return {deck.begin(), deck.end()};
}

inline std::string participant_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%02d", index + 1);
  return buf;
}

}  // namespace detail

/// Builds n synthetic participants. Each participant's latency medians are
/// the template's scaled by two per-participant multipliers (shared across
/// setups); age and CARS are drawn from the group's normal attributes and
/// clamped to plausible ranges. Deterministic in spec.seed.
inline std::vector<SyntheticParticipant> make_cohort(const CohortSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0xc0407));
  const int n = spec.n_participants;
  std::vector<SyntheticParticipant> out(static_cast<std::size_t>(n));

  std::vector<double> avatar_mult, object_mult;
  if (spec.design == CohortDesign::stratified) {
    avatar_mult = detail::stratified_multipliers(rng, n, spec.avatar_latency_variability);
    object_mult = detail::stratified_multipliers(rng, n, spec.object_latency_variability);
  } else {
    for (int i = 0; i < n; ++i) {
      avatar_mult.push_back(rng.lognormal(1.0, spec.avatar_latency_variability));
      object_mult.push_back(rng.lognormal(1.0, spec.object_latency_variability));
    }
  }

  for (int i = 0; i < n; ++i) {
    auto& p = out[static_cast<std::size_t>(i)];
    p.meta.id = detail::participant_id(i);
    p.meta.group = spec.group;
    p.meta.synthetic = true;
    const double age = std::clamp(rng.normal(spec.age.mean, spec.age.sd), spec.age_min, spec.age_max);
    p.meta.age_years = std::round(age * 100.0) / 100.0;
    const double cars = std::clamp(rng.normal(spec.cars.mean, spec.cars.sd), 0.0, 60.0);
    p.meta.cars_score = std::round(cars * 2.0) / 2.0;
    p.avatar_multiplier = avatar_mult[static_cast<std::size_t>(i)];
    p.object_multiplier = object_mult[static_cast<std::size_t>(i)];
  }

  const auto slots = static_cast<std::size_t>(n) * static_cast<std::size_t>(spec.trials_per_participant);
  for (const auto& setup : spec.setups) {
    std::vector<bool> follow, respond;
    if (spec.design == CohortDesign::stratified) {
      follow = detail::dealt_outcomes(rng, slots, setup.profile.follow_prob);
      respond = detail::dealt_outcomes(rng, slots, 1.0 - setup.profile.nonresponder_prob);
    }
    for (int i = 0; i < n; ++i) {
      auto& p = out[static_cast<std::size_t>(i)];
      BehaviorProfile prof = setup.profile;
      double obj = p.object_multiplier;
      if (setup.cars_coupling != 0.0 && spec.cars.sd > 0.0)
        obj *= std::exp(setup.cars_coupling * (p.meta.cars_score - spec.cars.mean) / spec.cars.sd);
      prof.orient_latency_to_avatar.median_ms *= p.avatar_multiplier;
      prof.orient_latency_to_object.median_ms *= obj;
      p.profiles.emplace(setup.setup, prof);
      if (spec.design == CohortDesign::stratified) {
        const auto za = detail::antithetic_scores(rng, spec.trials_per_participant);
        const auto zo = detail::antithetic_scores(rng, spec.trials_per_participant);
        std::vector<TrialPlan> plan;
        for (int k = 0; k < spec.trials_per_participant; ++k) {
          const auto slot = static_cast<std::size_t>(i * spec.trials_per_participant + k);
          const auto kk = static_cast<std::size_t>(k);
          plan.push_back(TrialPlan{follow[slot], respond[slot], za[kk], zo[kk]});
        }
        p.plans.emplace(setup.setup, std::move(plan));
      }
    }
  }
  return out;
}

}  // namespace jatrain
