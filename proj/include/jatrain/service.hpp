// service.hpp
//
// HTTP session service.
//
//   POST /api/session                 create (body: config, participant, profile, setup, time_scale)
//   POST /api/session/{id}/start      begin the closed-loop run
//   POST /api/session/{id}/stop       operator stop
//   GET  /api/session/{id}/performance  latest PerformancePayload
//   GET  /api/session/{id}/stream     MirrorFrames as server-sent events
//   POST /api/session/{id}/feedback   end-of-session note (body: {"note": "..."})
//   GET  /api/session/{id}/log        final SessionLog
//   GET  /api/health
//   GET  /api/schemas/{name}
//
// Each session runs in its own thread; HTTP handlers never touch engine
// state. Commands reach the session through its queue and are consumed at
// sample boundaries. Readers get immutable snapshots: every published
// payload is a fresh shared string, never modified after publication.
//
// A collector thread polls each session's latest payload at a fixed interval
// and persists changed ones to <log_dir>/<id>.performance.json; the final
// log goes to <log_dir>/<id>.json. All file writes are atomic renames.

#pragma once

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "jatrain/error.hpp"
#include "jatrain/json_io.hpp"
#include "jatrain/participant_sim.hpp"
#include "jatrain/runner.hpp"
#include "jatrain/schema.hpp"
#include "jatrain/store.hpp"
#include "jatrain/trial_engine.hpp"

namespace jatrain {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  fs::path log_dir = "logs";
  SessionConfig session_defaults;
  std::string default_profile = "NT_VR";
  double time_scale = 1.0;
  double frame_rate_hz = 10.0;
  int poll_interval_ms = 1000;
  /// Frames kept per session for late stream subscribers.
  std::size_t frame_buffer = 20000;
};

inline constexpr const char* kLogDirEnv = "JATRAIN_LOG_DIR";

/// "host:port" or ":port" or "host".
inline void apply_bind(ServiceConfig& cfg, const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    cfg.host = bind;
    return;
  }
  if (colon > 0) cfg.host = bind.substr(0, colon);
  try {
    std::size_t used = 0;
    const int port = std::stoi(bind.substr(colon + 1), &used);
    if (used != bind.size() - colon - 1 || port < 0 || port > 65535) throw std::invalid_argument("port");
    cfg.port = port;
  } catch (const std::exception&) {
    throw ConfigError("bind", "bad port in '" + bind + "'");
  }
}

inline ServiceConfig service_config_from_json(const json& j) {
  ObjectReader r(j, "");
  ServiceConfig c;
  if (auto b = r.opt<std::string>("bind")) apply_bind(c, *b);
  if (auto d = r.opt<std::string>("log_dir")) c.log_dir = *d;
  if (r.has("session_defaults")) c.session_defaults = session_config_from_json(r.raw("session_defaults"), {}, "session_defaults");
  else r.opt<double>("session_defaults");
  r.maybe("default_profile", c.default_profile);
  r.maybe("time_scale", c.time_scale);
  r.maybe("frame_rate_hz", c.frame_rate_hz);
  r.maybe("poll_interval_ms", c.poll_interval_ms);
  if (auto n = r.opt<std::uint64_t>("frame_buffer")) c.frame_buffer = static_cast<std::size_t>(*n);
  r.finish();
  if (!(c.time_scale > 0.0)) throw ConfigError("time_scale", "must be > 0");
  if (!(c.frame_rate_hz > 0.0)) throw ConfigError("frame_rate_hz", "must be > 0");
  if (c.poll_interval_ms < 1) throw ConfigError("poll_interval_ms", "must be >= 1");
  if (c.frame_buffer < 1) throw ConfigError("frame_buffer", "must be >= 1");
  try {
    (void)preset(c.default_profile);
  } catch (const InputError& e) {
    throw ConfigError("default_profile", e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------

class SessionService {
 public:
  explicit SessionService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    if (const char* env = std::getenv(kLogDirEnv); env && *env) cfg_.log_dir = env;
    std::error_code ec;
    fs::create_directories(cfg_.log_dir, ec);
    if (!fs::is_directory(cfg_.log_dir))
      throw IoError("cannot create log directory " + cfg_.log_dir.string());
    routes();
  }

  ~SessionService() { shutdown(); }

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Binds and returns the bound port; throws IoError on failure.
  int bind() {
    if (cfg_.port == 0) {
      port_ = server_.bind_to_any_port(cfg_.host);
    } else {
      port_ = server_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
    }
    if (port_ < 0) throw IoError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    return port_;
  }

  /// Serves until shutdown(). Requires bind().
  void serve() {
    collector_ = std::thread([this] { collect_loop(); });
    server_.listen_after_bind();
  }

  void shutdown() {
    if (shut_down_.exchange(true)) return;
    server_.stop();
    std::vector<std::shared_ptr<Managed>> all;
    {
      std::lock_guard lk(registry_mu_);
      for (auto& [_, s] : sessions_) all.push_back(s);
    }
    for (auto& s : all) {
      s->enqueue(Command::stop);
      if (s->worker.joinable()) s->worker.join();
    }
    {
      std::lock_guard lk(collector_mu_);
      collector_stop_ = true;
    }
    collector_cv_.notify_all();
    if (collector_.joinable()) collector_.join();
  }

  int port() const noexcept { return port_; }
  const ServiceConfig& config() const noexcept { return cfg_; }

 private:
  enum class Command { stop };
  enum class State { created, running, terminated };

  struct Managed {
    std::string id;
    std::string setup;
    SessionConfig config;
    ParticipantMeta participant;
    BehaviorProfile profile;
    double time_scale = 1.0;

    std::mutex mu;
    std::condition_variable cv;
    State state = State::created;
    std::deque<Command> commands;
    std::shared_ptr<const std::string> payload;
    std::uint64_t payload_seq = 0;
    std::deque<std::shared_ptr<const std::string>> frames;
    std::size_t frames_dropped = 0;  // index of frames.front()
    bool stream_closed = false;
    std::optional<SessionLog> log;
    std::thread worker;

    void enqueue(Command c) {
      {
        std::lock_guard lk(mu);
        commands.push_back(c);
      }
      cv.notify_all();
    }
  };

  // ---- HTTP plumbing

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message,
                         const std::string& field = {}) {
    json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    send_json(res, status, body);
  }

  std::shared_ptr<Managed> find(const std::string& id) {
    std::lock_guard lk(registry_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  template <typename F>
  void with_session(const httplib::Request& req, httplib::Response& res, F&& f) {
    auto s = find(req.matches[1]);
    if (!s) return send_error(res, 404, "unknown session '" + std::string(req.matches[1]) + "'");
    f(*s);
  }

  void routes() {
    server_.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      std::size_t n = 0;
      {
        std::lock_guard lk(registry_mu_);
        n = sessions_.size();
      }
      send_json(res, 200, json{{"status", "ok"}, {"schema_version", std::string(kSchemaVersion)}, {"sessions", n}});
    });

    server_.Get(R"(/api/schemas/([A-Za-z_]+))", [](const httplib::Request& req, httplib::Response& res) {
      const auto all = schema::all();
      auto it = all.find(req.matches[1]);
      if (it == all.end()) return send_error(res, 404, "unknown schema");
      send_json(res, 200, it->second);
    });

    server_.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto s = create(req.body);
        send_json(res, 201, json{{"session_id", s->id}, {"phase", "created"}, {"config", to_json(s->config)},
                                 {"participant", to_json(s->participant)}, {"profile", s->profile.name}});
      } catch (const ConfigError& e) {
        send_error(res, 400, e.what(), e.field());
      } catch (const Error& e) {
        send_error(res, 400, e.what());
      }
    });

    server_.Post(R"(/api/session/([^/]+)/start)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Managed& s) {
        std::lock_guard lk(s.mu);
        if (s.state != State::created) return send_error(res, 409, "session already started");
        s.state = State::running;
        auto self = find(s.id);
        s.worker = std::thread([this, self] { run_session(*self); });
        send_json(res, 202, json{{"session_id", s.id}, {"state", "running"}});
      });
    });

    server_.Post(R"(/api/session/([^/]+)/stop)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Managed& s) {
        {
          std::lock_guard lk(s.mu);
          if (s.state != State::running) return send_error(res, 409, "session is not running");
          s.commands.push_back(Command::stop);
        }
        s.cv.notify_all();
        send_json(res, 202, json{{"session_id", s.id}, {"stop", "requested"}});
      });
    });

    server_.Get(R"(/api/session/([^/]+)/performance)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Managed& s) {
        std::shared_ptr<const std::string> snap;
        {
          std::lock_guard lk(s.mu);
          snap = s.payload;
        }
        res.status = 200;
        res.set_content(*snap, "application/json");
      });
    });

    server_.Get(R"(/api/session/([^/]+)/log)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Managed& s) {
        std::lock_guard lk(s.mu);
        if (!s.log) return send_error(res, 409, "session has not terminated");
        res.status = 200;
        res.set_content(canonical_dump(to_json(*s.log)), "application/json");
      });
    });

    server_.Post(R"(/api/session/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, res, [&](Managed& s) {
        std::string note;
        try {
          const json body = parse_json_text(req.body, "body");
          ObjectReader r(body, "");
          note = r.req<std::string>("note");
          r.finish();
        } catch (const ConfigError& e) {
          return send_error(res, 400, e.what(), e.field());
        }
        std::lock_guard lk(s.mu);
        if (!s.log) return send_error(res, 409, "feedback is accepted only after the session terminates");
        s.log->feedback = note;
        try {
          store_log(*s.log, log_path(s.id));
        } catch (const Error& e) {
          return send_error(res, 500, e.what());
        }
        send_json(res, 200, json{{"session_id", s.id}, {"feedback", note}});
      });
    });

    server_.Get(R"(/api/session/([^/]+)/stream)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      if (!s) return send_error(res, 404, "unknown session '" + std::string(req.matches[1]) + "'");
      std::size_t from = 0;
      if (req.has_param("from")) {
        try {
          from = std::stoul(req.get_param_value("from"));
        } catch (const std::exception&) {
          return send_error(res, 400, "invalid from: expected a frame index", "from");
        }
      }
      auto cursor = std::make_shared<std::size_t>(from);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, s, cursor](std::size_t, httplib::DataSink& sink) {
            std::vector<std::pair<std::size_t, std::shared_ptr<const std::string>>> batch;
            bool done = false;
            {
              std::unique_lock lk(s->mu);
              s->cv.wait_for(lk, std::chrono::milliseconds(500), [&] {
                return s->frames_dropped + s->frames.size() > *cursor || s->stream_closed || shut_down_;
              });
              if (*cursor < s->frames_dropped) *cursor = s->frames_dropped;
              for (std::size_t i = *cursor; i < s->frames_dropped + s->frames.size(); ++i)
                batch.emplace_back(i, s->frames[i - s->frames_dropped]);
              done = (s->stream_closed || shut_down_) && *cursor + batch.size() >= s->frames_dropped + s->frames.size();
            }
            for (const auto& [index, text] : batch) {
              const std::string msg = "id: " + std::to_string(index) + "\nevent: frame\ndata: " + *text + "\n\n";
              if (!sink.write(msg.data(), msg.size())) return false;
              ++*cursor;
            }
            if (batch.empty() && !done) {
              static constexpr char kPing[] = ": keepalive\n\n";
              if (!sink.write(kPing, sizeof kPing - 1)) return false;
            }
            if (done) sink.done();
            return true;
          });
    });
  }

  // ---- sessions

  fs::path log_path(const std::string& id) const { return cfg_.log_dir / (id + ".json"); }
  fs::path checkpoint_path(const std::string& id) const { return cfg_.log_dir / (id + ".performance.json"); }

  std::string next_id() {
    using namespace std::chrono;
    const auto ms = duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "s%011llx-%04u", static_cast<unsigned long long>(ms), ++id_counter_);
    return buf;
  }

  std::shared_ptr<Managed> create(const std::string& body) {
    const json j = body.empty() ? json::object() : parse_json_text(body, "body");
    ObjectReader r(j, "");
    auto s = std::make_shared<Managed>();
    s->config = cfg_.session_defaults;
    if (r.has("config")) s->config = session_config_from_json(r.raw("config"), cfg_.session_defaults, "config");
    else r.opt<double>("config");
    if (auto mode = r.opt<std::string>("timing_mode")) {
      try {
        s->config.timing_mode = timing_mode_from_string(*mode);
      } catch (const ConfigError& e) {
        throw ConfigError("timing_mode", e.reason());
      }
    }
    if (r.has("profile")) s->profile = profile_from_json(r.raw("profile"), "profile");
    else {
      r.opt<double>("profile");
      s->profile = preset(cfg_.default_profile);
    }
    if (r.has("participant")) {
      s->participant = participant_from_json(r.raw("participant"));
    } else {
      r.opt<double>("participant");
      s->participant = ParticipantMeta{"anonymous", s->profile.name.starts_with("ASD") ? "ASD" : "NT", 0.0, 0.0, true};
    }
    s->setup = r.opt<std::string>("setup").value_or(s->profile.name.ends_with("_AR") ? "AR" : "VR");
    s->time_scale = r.opt<double>("time_scale").value_or(cfg_.time_scale);
    if (!(s->time_scale > 0.0)) throw ConfigError("time_scale", "must be > 0");
    r.finish();

    std::lock_guard lk(registry_mu_);
    do {
      s->id = next_id();
    } while (sessions_.count(s->id));
    PerformancePayload p;
    p.session_id = s->id;
    p.participant = s->participant;
    s->payload = std::make_shared<const std::string>(to_json(p).dump());
    sessions_.emplace(s->id, s);
    return s;
  }

  void publish_payload(Managed& s, const Session& session, TimeMs now) {
    std::lock_guard lk(s.mu);
    ++s.payload_seq;
    s.payload = std::make_shared<const std::string>(to_json(make_payload(s.id, session, now, s.payload_seq)).dump());
  }

  void publish_frame(Managed& s, const MirrorFrame& f, const Scene& scene) {
    auto text = std::make_shared<const std::string>(to_json(f, scene).dump());
    {
      std::lock_guard lk(s.mu);
      s.frames.push_back(std::move(text));
      while (s.frames.size() > cfg_.frame_buffer) {
        s.frames.pop_front();
        ++s.frames_dropped;
      }
    }
    s.cv.notify_all();
  }

  void run_session(Managed& s) {
    const Scene scene = Scene::standard();
    Session session(s.config, s.participant, scene);
    GazeGenerator gen(s.profile, scene, generator_seed(s.config.rng_seed));
    std::unique_ptr<Clock> clock;
    if (s.config.timing_mode == TimingMode::fast) clock = std::make_unique<SimulatedClock>();
    else clock = std::make_unique<WallClock>(s.time_scale);
    SessionRunner runner(s.id, session, gen, *clock, cfg_.frame_rate_hz);

    RunnerHooks hooks;
    hooks.on_events = [&](std::span<const EngineEvent>, const Session& sess, TimeMs now) {
      publish_payload(s, sess, now);
    };
    hooks.on_frame = [&](const MirrorFrame& f) { publish_frame(s, f, scene); };
    hooks.stop_requested = [&] {
      std::lock_guard lk(s.mu);
      return !s.commands.empty();
    };
    const TimeMs end = runner.run(hooks);
    publish_payload(s, session, end);

    SessionLog log = session.finalize();
    log.session_id = s.id;
    log.setup = s.setup;
    log.profile = s.profile.name;
    try {
      store_log(log, log_path(s.id));
      persist_checkpoint(s);
    } catch (const Error& e) {
      std::fprintf(stderr, "session %s: %s\n", s.id.c_str(), e.what());
    }
    {
      std::lock_guard lk(s.mu);
      s.log = std::move(log);
      s.state = State::terminated;
      s.stream_closed = true;
      s.commands.clear();
    }
    s.cv.notify_all();
  }

  // ---- collector

  void persist_checkpoint(Managed& s) {
    std::shared_ptr<const std::string> snap;
    std::uint64_t seq = 0;
    {
      std::lock_guard lk(s.mu);
      snap = s.payload;
      seq = s.payload_seq;
    }
    std::lock_guard lk(persist_mu_);
    auto& last = persisted_seq_[s.id];
    if (last && *last >= seq) return;
    atomic_write(checkpoint_path(s.id), canonical_dump(json::parse(*snap)));
    last = seq;
  }

  void collect_loop() {
    std::unique_lock lk(collector_mu_);
    while (!collector_stop_) {
      collector_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.poll_interval_ms), [&] { return collector_stop_; });
      if (collector_stop_) break;
      lk.unlock();
      std::vector<std::shared_ptr<Managed>> all;
      {
        std::lock_guard rl(registry_mu_);
        for (auto& [_, s] : sessions_) all.push_back(s);
      }
      for (auto& s : all) {
        bool started = false;
        {
          std::lock_guard sl(s->mu);
          started = s->state != State::created;
        }
        if (!started) continue;
        try {
          persist_checkpoint(*s);
        } catch (const Error& e) {
          std::fprintf(stderr, "checkpoint %s: %s\n", s->id.c_str(), e.what());
        }
      }
      lk.lock();
    }
  }

  ServiceConfig cfg_;
  httplib::Server server_;
  int port_ = -1;
  std::atomic<bool> shut_down_{false};
  unsigned id_counter_ = 0;

  std::mutex registry_mu_;
  std::map<std::string, std::shared_ptr<Managed>> sessions_;

  std::mutex persist_mu_;
  std::map<std::string, std::optional<std::uint64_t>> persisted_seq_;

  std::mutex collector_mu_;
  std::condition_variable collector_cv_;
  bool collector_stop_ = false;
  std::thread collector_;
};

}  // namespace jatrain
