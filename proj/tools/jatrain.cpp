// jatrain command-line entry point.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "jatrain/analysis.hpp"
#include "jatrain/batch.hpp"
#include "jatrain/calibration.hpp"
#include "jatrain/schema.hpp"
#include "jatrain/service.hpp"

namespace {

using namespace jatrain;

int cmd_serve(const std::string& bind, const std::string& config_file) {
  ServiceConfig cfg;
  if (!config_file.empty()) cfg = service_config_from_json(parse_json_text(read_file(config_file), config_file));
  if (!bind.empty()) apply_bind(cfg, bind);

  // Route SIGINT/SIGTERM to a waiter thread so shutdown runs outside a
  // signal handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionService service(cfg);
  const int port = service.bind();
  std::printf("listening on http://%s:%d (logs: %s)\n", cfg.host.c_str(), port,
              service.config().log_dir.c_str());
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.shutdown();
  });
  service.serve();
  // serve() also returns if the listener fails; wake the waiter either way.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  service.shutdown();
  return 0;
}

int cmd_batch(const std::string& cohort_file, const std::string& out, std::optional<std::uint64_t> seed,
              bool fast, const std::string& config_file) {
  StudySpec study = cohort_file.empty() ? default_study() : load_study(cohort_file);
  if (!config_file.empty())
    study.config = session_config_from_json(parse_json_text(read_file(config_file), config_file), study.config);
  BatchOptions opt;
  opt.seed = seed;
  opt.fast = fast || study.config.timing_mode == TimingMode::fast;
  const auto result = run_batch(study, out, opt);
  std::printf("wrote %zu session logs to %s\n", result.paths.size(), out.c_str());
  std::fputs(format_summary(aggregate_metrics(result.logs)).c_str(), stdout);
  return 0;
}

int cmd_analyze(const std::string& logs_dir, const std::string& out, const std::string& grouping) {
  const auto logs = load_logs(logs_dir);
  if (logs.empty()) throw InputError("no session logs in " + logs_dir);
  const Grouping g = grouping_from_string(grouping);
  const auto files = write_analysis(logs, g, out);
  const auto rep = analysis_report(logs, g);
  std::fputs(format_summary(rep.metrics).c_str(), stdout);
  for (const auto& d : rep.differences)
    std::printf("Mann-Whitney %s %s: U=%.1f z=%.3f p=%.3g (%s)%s%s\n", d.setup.c_str(),
                std::string(to_string(d.metric)).c_str(), *d.result.u, *d.result.z, d.result.p_value,
                std::string(stats::to_string(d.result.method)).c_str(),
                d.result.p_value < 0.05 ? " p<0.05" : "", d.result.p_value < 0.01 ? " p<0.01" : "");
  for (const auto& o : rep.omissions)
    std::printf("omitted %s %s: %s\n", o.analysis.c_str(), o.setup.c_str(), o.reason.c_str());
  for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
  return 0;
}

int cmd_presets_list(bool as_json) {
  if (as_json) {
    json all = json::object();
    for (const auto& name : preset_names()) all[name] = to_json(preset(name));
    std::fputs(canonical_dump(all).c_str(), stdout);
    return 0;
  }
  for (const auto& t : kPresetTargets) {
    const auto p = preset(t.name);
    std::printf("%-7s avatar %8.0f ms  object %8.0f ms  sigma %.2f  follow %.3f  target T_EC %.2f s  T_RR %.2f s\n",
                std::string(t.name).c_str(), p.orient_latency_to_avatar.median_ms,
                p.orient_latency_to_object.median_ms, p.orient_latency_to_avatar.sigma, p.follow_prob,
                t.median_t_ec_s, t.median_t_rr_s);
  }
  return 0;
}

int cmd_presets_calibrate(const std::vector<std::string>& names, int sessions, const std::string& out) {
  json all = json::object();
  const auto targets = names.empty() ? preset_names() : names;
  for (const auto& name : targets) {
    CalibrationOptions opt;
    opt.sessions = sessions;
    const auto res = calibrate_preset(preset(name), preset_target(name), opt);
    std::printf("%-7s rounds %2d %s avatar %.0f ms object %.0f ms -> median T_EC %.3f s, T_RR %.3f s\n",
                name.c_str(), res.rounds, res.converged ? "converged" : "NOT CONVERGED",
                res.profile.orient_latency_to_avatar.median_ms, res.profile.orient_latency_to_object.median_ms,
                res.metrics.median_t_ec_s, res.metrics.median_t_rr_s);
    all[name] = to_json(res.profile);
  }
  if (!out.empty()) {
    atomic_write(out, canonical_dump(all));
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

int cmd_schemas_export(const std::string& out) {
  fs::create_directories(out);
  for (const auto& [stem, s] : schema::all()) {
    const fs::path path = fs::path(out) / (stem + ".schema.json");
    atomic_write(path, canonical_dump(s));
    std::printf("wrote %s\n", path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint-attention training session engine, simulator and analysis"};
  app.require_subcommand(1);

  std::string bind, config_file, cohort_file, out_dir, logs_dir, grouping = "per_trial";
  std::uint64_t seed = 0;
  bool fast = false, as_json = false;
  int sessions = 2000;
  std::vector<std::string> names;

  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--bind", bind, "ADDR as host:port (port 0 picks a free one)");
  serve->add_option("--config", config_file, "Service config JSON")->check(CLI::ExistingFile);

  auto* batch = app.add_subcommand("batch", "Simulate every participant x setup session of a study");
  batch->add_option("--cohort", cohort_file, "Study/cohort JSON (default: built-in 16 ASD + 13 NT)")
      ->check(CLI::ExistingFile);
  batch->add_option("--out", out_dir, "Output directory")->required();
  auto* seed_opt = batch->add_option("--seed", seed, "Study seed (overrides the file)");
  batch->add_flag("--fast", fast, "Force fast simulated timing");
  batch->add_option("--config", config_file, "SessionConfig overrides JSON")->check(CLI::ExistingFile);

  auto* analyze = app.add_subcommand("analyze", "Metrics and group statistics from session logs");
  analyze->add_option("--logs", logs_dir, "Directory of session logs")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--out", out_dir, "Output directory")->required();
  analyze->add_option("--grouping", grouping, "per_trial or per_participant")
      ->check(CLI::IsMember({"per_trial", "per_participant"}));

  auto* presets = app.add_subcommand("presets", "Behaviour presets");
  presets->require_subcommand(1);
  auto* list = presets->add_subcommand("list", "Show the calibrated presets");
  list->add_flag("--json", as_json, "Print as JSON");
  auto* calibrate = presets->add_subcommand("calibrate", "Re-run the preset calibration search");
  calibrate->add_option("names", names, "Presets to calibrate (default: all)");
  calibrate->add_option("--sessions", sessions, "Sessions simulated per round")->check(CLI::PositiveNumber);
  calibrate->add_option("--out", out_dir, "Write calibrated profiles to this JSON file");

  auto* schemas = app.add_subcommand("schemas", "Published JSON Schemas");
  schemas->require_subcommand(1);
  auto* exp = schemas->add_subcommand("export", "Write schema files");
  std::string schema_dir = "schemas";
  exp->add_option("--out", schema_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(bind, config_file);
    if (*batch) {
      std::optional<std::uint64_t> s;
      if (*seed_opt) s = seed;
      return cmd_batch(cohort_file, out_dir, s, fast, config_file);
    }
    if (*analyze) return cmd_analyze(logs_dir, out_dir, grouping);
    if (*list) return cmd_presets_list(as_json);
    if (*calibrate) return cmd_presets_calibrate(names, sessions, out_dir);
    if (*exp) return cmd_schemas_export(schema_dir);
  } catch (const jatrain::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
