// calibration.hpp
//
// Empirical preset calibration. Latency medians are adjusted until the
// simulated median T_EC / T_RR match a preset's target medians. Each metric
// is a latency plus a dwell, and the dwell part barely moves, so every round
// rescales the latency median by (target - floor) / (measured - floor),
// where floor is the qualifying dwell. Every round reuses the same session
// seeds so the search is not chasing sampling noise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jatrain/participant_sim.hpp"
#include "jatrain/runner.hpp"
#include "jatrain/trial_engine.hpp"

namespace jatrain {

struct SimulatedMetrics {
  std::size_t trials = 0;
  std::size_t responded = 0;
  std::size_t correct = 0;
  double median_t_ec_s = 0.0;
  double mean_t_ec_s = 0.0;
  double median_t_rr_s = 0.0;
  double mean_t_rr_s = 0.0;
};

/// Runs `sessions` independent fast sessions of `profile` and pools their
/// completed trials.
inline SimulatedMetrics simulate_profile(const BehaviorProfile& profile, int sessions, std::uint64_t seed,
                                         const SessionConfig& base = {}) {
  std::vector<double> tec, trr;
  SimulatedMetrics m;
  for (int i = 0; i < sessions; ++i) {
    SessionConfig cfg = base;
    cfg.rng_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    ParticipantMeta meta{"S" + std::to_string(i), "NT", 0.0, 0.0, true};
    const auto log = run_simulated_session(meta.id, "sim", cfg, meta, profile);
    for (const auto& t : log.trials) {
      if (t.correct) {
        ++m.responded;
        if (*t.correct) ++m.correct;
      }
      if (!t.completed) continue;
      ++m.trials;
      tec.push_back(seconds(*t.t_ec_ms));
      trr.push_back(seconds(*t.t_rr_ms));
    }
  }
  if (!tec.empty()) {
    m.median_t_ec_s = median_of(tec);
    m.mean_t_ec_s = mean_of(tec);
  }
  if (!trr.empty()) {
    m.median_t_rr_s = median_of(trr);
    m.mean_t_rr_s = mean_of(trr);
  }
  return m;
}

struct CalibrationResult {
  BehaviorProfile profile;
  SimulatedMetrics metrics;
  int rounds = 0;
  bool converged = false;
};

struct CalibrationOptions {
  int sessions = 2000;
  int max_rounds = 12;
  /// Relative tolerance on both medians.
  double tolerance = 0.01;
  std::uint64_t seed = 0xca11b;
};

inline CalibrationResult calibrate_preset(BehaviorProfile start, const PresetTarget& target,
                                          const CalibrationOptions& opt = {},
                                          const SessionConfig& base = {}) {
  CalibrationResult res;
  res.profile = std::move(start);
  res.profile.follow_prob = target.follow_prob;
  const double ec_floor = seconds(base.eye_contact_dwell_ms);
  const double rr_floor = seconds(base.response_dwell_ms);
  for (res.rounds = 1; res.rounds <= opt.max_rounds; ++res.rounds) {
    res.metrics = simulate_profile(res.profile, opt.sessions, opt.seed, base);
    const double ec_err = res.metrics.median_t_ec_s / target.median_t_ec_s - 1.0;
    const double rr_err = res.metrics.median_t_rr_s / target.median_t_rr_s - 1.0;
    if (std::abs(ec_err) <= opt.tolerance && std::abs(rr_err) <= opt.tolerance) {
      res.converged = true;
      break;
    }
    auto rescale = [](LogNormal& d, double target_s, double measured_s, double floor_s) {
      const double want = std::max(target_s - floor_s, 0.05);
      const double got = std::max(measured_s - floor_s, 0.05);
      d.median_ms = std::max(1.0, std::round(d.median_ms * want / got));
    };
    rescale(res.profile.orient_latency_to_avatar, target.median_t_ec_s, res.metrics.median_t_ec_s, ec_floor);
    rescale(res.profile.orient_latency_to_object, target.median_t_rr_s, res.metrics.median_t_rr_s, rr_floor);
  }
  res.rounds = std::min(res.rounds, opt.max_rounds);
  return res;
}

}  // namespace jatrain
