// analysis.hpp
//
// Cohort-level metrics and the group-comparison report computed from stored
// session logs.
//
// Grouping controls the unit of analysis. per_trial pools every completed
// trial (C_PR from pooled correct/responded counts). per_participant uses
// each session's own median T_EC / T_RR and averages the sessions' C_PR,
// skipping sessions with no responded trial.

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jatrain/error.hpp"
#include "jatrain/json_io.hpp"
#include "jatrain/stats.hpp"
#include "jatrain/store.hpp"

namespace jatrain {

enum class Grouping { per_trial, per_participant };

constexpr std::string_view to_string(Grouping g) {
  return g == Grouping::per_trial ? "per_trial" : "per_participant";
}

inline Grouping grouping_from_string(std::string_view s) {
  if (s == "per_trial") return Grouping::per_trial;
  if (s == "per_participant") return Grouping::per_participant;
  throw ConfigError("grouping", "expected per_trial or per_participant, got '" + std::string(s) + "'");
}

enum class Metric { t_ec, t_rr };

constexpr std::string_view to_string(Metric m) { return m == Metric::t_ec ? "t_ec" : "t_rr"; }

/// One observation at the chosen grouping, tagged with its participant.
struct Unit {
  std::string participant_id;
  double age_years = 0.0;
  double cars_score = 0.0;
  std::optional<int> trial_index;  // per_trial only
  std::optional<double> t_ec_s;
  std::optional<double> t_rr_s;
};

using CellKey = std::pair<std::string, std::string>;  // (group, setup)

inline std::map<CellKey, std::vector<const SessionLog*>> by_cell(const std::vector<SessionLog>& logs) {
  std::map<CellKey, std::vector<const SessionLog*>> cells;
  for (const auto& l : logs) cells[{l.participant.group, l.setup}].push_back(&l);
  return cells;
}

inline std::vector<Unit> units_of(const std::vector<const SessionLog*>& logs, Grouping g) {
  std::vector<Unit> out;
  for (const auto* l : logs) {
    Unit base{l->participant.id, l->participant.age_years, l->participant.cars_score, {}, {}, {}};
    if (g == Grouping::per_participant) {
      if (l->aggregates.completed_trials == 0) continue;
      base.t_ec_s = l->aggregates.median_t_ec_s;
      base.t_rr_s = l->aggregates.median_t_rr_s;
      out.push_back(base);
      continue;
    }
    for (const auto& t : l->trials) {
      if (!t.completed) continue;
      Unit u = base;
      u.trial_index = t.trial_index;
      if (t.t_ec_ms) u.t_ec_s = seconds(*t.t_ec_ms);
      if (t.t_rr_ms) u.t_rr_s = seconds(*t.t_rr_ms);
      out.push_back(u);
    }
  }
  return out;
}

inline std::vector<double> metric_values(const std::vector<Unit>& units, Metric m) {
  std::vector<double> v;
  for (const auto& u : units) {
    const auto& x = m == Metric::t_ec ? u.t_ec_s : u.t_rr_s;
    if (x) v.push_back(*x);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Metric table

struct MetricRow {
  std::string group;
  std::string setup;
  std::size_t sessions = 0;
  std::size_t n_t_ec = 0;
  std::optional<double> median_t_ec_s;
  std::optional<double> mean_t_ec_s;
  std::size_t n_t_rr = 0;
  std::optional<double> median_t_rr_s;
  std::optional<double> mean_t_rr_s;
  int responded = 0;
  int correct = 0;
  std::optional<double> c_pr_percent;
};

struct MetricTable {
  Grouping grouping = Grouping::per_trial;
  std::vector<MetricRow> rows;

  const MetricRow* find(std::string_view group, std::string_view setup) const {
    for (const auto& r : rows)
      if (r.group == group && r.setup == setup) return &r;
    return nullptr;
  }
};

inline MetricTable aggregate_metrics(const std::vector<SessionLog>& logs, Grouping g = Grouping::per_trial) {
  if (logs.empty()) throw InputError("aggregate_metrics needs at least one log");
  MetricTable table;
  table.grouping = g;
  for (const auto& [key, cell] : by_cell(logs)) {
    MetricRow row;
    row.group = key.first;
    row.setup = key.second;
    row.sessions = cell.size();
    const auto units = units_of(cell, g);
    const auto tec = metric_values(units, Metric::t_ec);
    const auto trr = metric_values(units, Metric::t_rr);
    row.n_t_ec = tec.size();
    row.n_t_rr = trr.size();
    if (!tec.empty()) {
      row.median_t_ec_s = quantize3(median_of(tec));
      row.mean_t_ec_s = quantize3(mean_of(tec));
    }
    if (!trr.empty()) {
      row.median_t_rr_s = quantize3(median_of(trr));
      row.mean_t_rr_s = quantize3(mean_of(trr));
    }
    std::vector<double> session_cpr;
    for (const auto* l : cell) {
      row.responded += l->aggregates.responded_trials;
      row.correct += l->aggregates.correct_trials;
      if (l->aggregates.c_pr_percent) session_cpr.push_back(*l->aggregates.c_pr_percent);
    }
    if (g == Grouping::per_trial) {
      if (row.responded > 0) row.c_pr_percent = quantize3(100.0 * row.correct / row.responded);
    } else if (!session_cpr.empty()) {
      row.c_pr_percent = quantize3(mean_of(session_cpr));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline json to_json(const MetricRow& r) {
  return json{{"group", r.group},
              {"setup", r.setup},
              {"sessions", r.sessions},
              {"n_t_ec", r.n_t_ec},
              {"median_t_ec_s", nullable(r.median_t_ec_s)},
              {"mean_t_ec_s", nullable(r.mean_t_ec_s)},
              {"n_t_rr", r.n_t_rr},
              {"median_t_rr_s", nullable(r.median_t_rr_s)},
              {"mean_t_rr_s", nullable(r.mean_t_rr_s)},
              {"responded", r.responded},
              {"correct", r.correct},
              {"c_pr_percent", nullable(r.c_pr_percent)}};
}

inline json to_json(const MetricTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back(to_json(r));
  return json{{"schema_version", std::string(kSchemaVersion)},
              {"grouping", std::string(to_string(t.grouping))},
              {"rows", std::move(rows)}};
}

namespace detail {

inline std::string fmt3(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace detail

inline std::string metrics_csv(const MetricTable& t) {
  std::string out =
      "group,setup,grouping,sessions,n_t_ec,median_t_ec_s,mean_t_ec_s,n_t_rr,median_t_rr_s,"
      "mean_t_rr_s,responded,correct,c_pr_percent\n";
  for (const auto& r : t.rows) {
    out += r.group + "," + r.setup + "," + std::string(to_string(t.grouping)) + "," +
           std::to_string(r.sessions) + "," + std::to_string(r.n_t_ec) + "," +
           detail::fmt3(r.median_t_ec_s) + "," + detail::fmt3(r.mean_t_ec_s) + "," +
           std::to_string(r.n_t_rr) + "," + detail::fmt3(r.median_t_rr_s) + "," +
           detail::fmt3(r.mean_t_rr_s) + "," + std::to_string(r.responded) + "," +
           std::to_string(r.correct) + "," + detail::fmt3(r.c_pr_percent) + "\n";
  }
  return out;
}

/// One row per unit at the given grouping; the plot series behind the
/// box plots and scatter plots.
inline std::string series_csv(const std::vector<SessionLog>& logs, Grouping g) {
  std::string out = "group,setup,participant_id,age_years,cars_score,trial_index,t_ec_s,t_rr_s\n";
  for (const auto& [key, cell] : by_cell(logs)) {
    for (const auto& u : units_of(cell, g)) {
      char attrs[64];
      std::snprintf(attrs, sizeof attrs, "%.2f,%.1f", u.age_years, u.cars_score);
      out += key.first + "," + key.second + "," + u.participant_id + "," + attrs + "," +
             (u.trial_index ? std::to_string(*u.trial_index) : std::string()) + "," +
             detail::fmt3(u.t_ec_s) + "," + detail::fmt3(u.t_rr_s) + "\n";
    }
  }
  return out;
}

inline std::string format_summary(const MetricTable& t) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %-5s %8s %12s %12s %12s %12s %8s\n", "group", "setup",
                "sessions", "med T_EC s", "mean T_EC s", "med T_RR s", "mean T_RR s", "C_PR %");
  out += line;
  auto f = [](const std::optional<double>& v) { return v ? detail::fmt3(v) : std::string("-"); };
  for (const auto& r : t.rows) {
    std::snprintf(line, sizeof line, "%-5s %-5s %8zu %12s %12s %12s %12s %8s\n", r.group.c_str(),
                  r.setup.c_str(), r.sessions, f(r.median_t_ec_s).c_str(), f(r.mean_t_ec_s).c_str(),
                  f(r.median_t_rr_s).c_str(), f(r.mean_t_rr_s).c_str(), f(r.c_pr_percent).c_str());
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

inline json to_json(const stats::StatTestResult& r) {
  return json{{"test_name", r.test_name},
              {"u", nullable(r.u)},
              {"u1", nullable(r.u1)},
              {"u2", nullable(r.u2)},
              {"z", nullable(r.z)},
              {"rho", nullable(r.rho)},
              {"t", nullable(r.t)},
              {"p_value", r.p_value},
              {"alternative", std::string(stats::to_string(r.alternative))},
              {"method", std::string(stats::to_string(r.method))},
              {"n1", r.n1},
              {"n2", r.n2},
              {"tie_correction_applied", r.tie_correction_applied},
              {"continuity_correction", r.continuity_correction},
              {"degenerate", r.degenerate}};
}

inline constexpr std::array<double, 2> kThresholds{0.05, 0.01};

struct GroupDifference {
  std::string setup;
  Metric metric = Metric::t_ec;
  stats::StatTestResult result;  // a = ASD, b = NT, alternative: ASD greater
};

struct Correlation {
  std::string group;
  std::string setup;
  Metric metric = Metric::t_ec;
  std::string attribute;  // "age" or "cars"
  stats::StatTestResult result;
};

struct Omission {
  std::string analysis;
  std::string setup;
  std::string reason;
};

struct AnalysisReport {
  Grouping grouping = Grouping::per_trial;
  MetricTable metrics;
  std::vector<GroupDifference> differences;
  std::vector<Correlation> correlations;
  std::vector<Omission> omissions;

  const GroupDifference* difference(std::string_view setup, Metric m) const {
    for (const auto& d : differences)
      if (d.setup == setup && d.metric == m) return &d;
    return nullptr;
  }
};

inline AnalysisReport analysis_report(const std::vector<SessionLog>& logs, Grouping g = Grouping::per_trial,
                                      const stats::MannWhitneyOptions& mw = {}) {
  AnalysisReport rep;
  rep.grouping = g;
  rep.metrics = aggregate_metrics(logs, g);
  const auto cells = by_cell(logs);

  std::vector<std::string> setups;
  for (const auto& [key, _] : cells)
    if (std::find(setups.begin(), setups.end(), key.second) == setups.end()) setups.push_back(key.second);

  auto units_for = [&](const std::string& group, const std::string& setup) -> std::optional<std::vector<Unit>> {
    auto it = cells.find({group, setup});
    if (it == cells.end()) return std::nullopt;
    return units_of(it->second, g);
  };

  for (const auto& setup : setups) {
    const auto asd = units_for("ASD", setup);
    const auto nt = units_for("NT", setup);
    for (Metric m : {Metric::t_ec, Metric::t_rr}) {
      const std::string name = "mann_whitney_" + std::string(to_string(m));
      if (!asd || !nt) {
        rep.omissions.push_back({name, setup, std::string("group ") + (!asd ? "ASD" : "NT") + " missing"});
        continue;
      }
      const auto a = metric_values(*asd, m);
      const auto b = metric_values(*nt, m);
      if (a.empty() || b.empty()) {
        rep.omissions.push_back({name, setup, "no completed trials in one group"});
        continue;
      }
      rep.differences.push_back(
          {setup, m, stats::mann_whitney_u(a, b, stats::Alternative::one_tailed_greater, mw)});
    }

    if (!asd) {
      rep.omissions.push_back({"spearman", setup, "group ASD missing"});
      continue;
    }
    for (Metric m : {Metric::t_ec, Metric::t_rr}) {
      for (const char* attr : {"age", "cars"}) {
        std::vector<double> x, y;
        for (const auto& u : *asd) {
          const auto& v = m == Metric::t_ec ? u.t_ec_s : u.t_rr_s;
          if (!v) continue;
          x.push_back(*v);
          y.push_back(std::string_view(attr) == "age" ? u.age_years : u.cars_score);
        }
        const std::string name = "spearman_" + std::string(to_string(m)) + "_" + attr;
        if (x.size() < 3) {
          rep.omissions.push_back({name, setup, "fewer than 3 observations"});
          continue;
        }
        rep.correlations.push_back({"ASD", setup, m, attr, stats::spearman(x, y)});
      }
    }
  }
  return rep;
}

inline json to_json(const AnalysisReport& rep) {
  auto significance = [](double p) {
    json s = json::object();
    for (double a : kThresholds) {
      char key[32];
      std::snprintf(key, sizeof key, "p_below_%.2f", a);
      s[key] = p < a;
    }
    return s;
  };
  json diffs = json::array();
  for (const auto& d : rep.differences) {
    diffs.push_back(json{{"setup", d.setup},
                         {"metric", std::string(to_string(d.metric))},
                         {"first_group", "ASD"},
                         {"second_group", "NT"},
                         {"test", to_json(d.result)},
                         {"significance", significance(d.result.p_value)}});
  }
  json cors = json::array();
  for (const auto& c : rep.correlations) {
    cors.push_back(json{{"group", c.group},
                        {"setup", c.setup},
                        {"metric", std::string(to_string(c.metric))},
                        {"attribute", c.attribute},
                        {"test", to_json(c.result)},
                        {"significance", significance(c.result.p_value)}});
  }
  json cpr = json::array();
  for (const auto& r : rep.metrics.rows)
    cpr.push_back(json{{"group", r.group},
                       {"setup", r.setup},
                       {"responded", r.responded},
                       {"correct", r.correct},
                       {"c_pr_percent", nullable(r.c_pr_percent)}});
  json om = json::array();
  for (const auto& o : rep.omissions)
    om.push_back(json{{"analysis", o.analysis}, {"setup", o.setup}, {"reason", o.reason}});
  return json{{"schema_version", std::string(kSchemaVersion)},
              {"grouping", std::string(to_string(rep.grouping))},
              {"thresholds", json(kThresholds)},
              {"metrics", to_json(rep.metrics)["rows"]},
              {"group_differences", std::move(diffs)},
              {"correlations", std::move(cors)},
              {"response_correctness", std::move(cpr)},
              {"omissions", std::move(om)}};
}

/// Every *.json log directly inside `dir`, in file-name order.
inline std::vector<SessionLog> load_logs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".json" && !name.starts_with("."))
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SessionLog> logs;
  for (const auto& f : files) logs.push_back(load_log(f));
  return logs;
}

/// Writes report.json, metrics.json, metrics.csv and series.csv.
inline std::vector<fs::path> write_analysis(const std::vector<SessionLog>& logs, Grouping g, const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (!fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
  const auto rep = analysis_report(logs, g);
  std::vector<fs::path> written{out / "report.json", out / "metrics.json", out / "metrics.csv", out / "series.csv"};
  atomic_write(written[0], canonical_dump(to_json(rep)));
  atomic_write(written[1], canonical_dump(to_json(rep.metrics)));
  atomic_write(written[2], metrics_csv(rep.metrics));
  atomic_write(written[3], series_csv(logs, g));
  return written;
}

}  // namespace jatrain
