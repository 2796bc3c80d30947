// Shared helpers for the test executables.

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "jatrain/gaze.hpp"
#include "jatrain/trial_engine.hpp"

namespace test {

namespace fs = std::filesystem;
using jatrain::GazeSample;
using jatrain::Point;
using jatrain::TimeMs;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("jatrain-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

// Points in the standard scene.
inline constexpr Point kEyes{0.0, 0.35};
inline constexpr Point kLeft{-0.65, -0.15};
inline constexpr Point kRight{0.65, -0.15};
inline constexpr Point kAway{0.0, -0.8};

inline Point object_point(jatrain::Side s) { return s == jatrain::Side::left ? kLeft : kRight; }

/// Feeds one sample every `period` ms over [from, to]. `where` returns the
/// gaze point (nullopt = invalid sample) and may inspect the session.
/// Stops early when the session terminates.
inline std::vector<jatrain::EngineEvent> drive(
    jatrain::Session& s, TimeMs from, TimeMs to, TimeMs period,
    const std::function<std::optional<Point>(TimeMs, const jatrain::Session&)>& where) {
  std::vector<jatrain::EngineEvent> all;
  for (TimeMs t = from; t <= to && !s.terminated(); t += period) {
    const auto p = where(t, s);
    const GazeSample g = p ? GazeSample{t, p->x, p->y, true} : GazeSample{t, 0.0, 0.0, false};
    auto ev = s.step(g);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

template <class T>
std::vector<T> events_of(const std::vector<jatrain::EngineEvent>& ev) {
  std::vector<T> out;
  for (const auto& e : ev)
    if (const auto* x = std::get_if<T>(&e)) out.push_back(*x);
  return out;
}

/// Random gaze streams for dwell-tracker property tests: random region,
/// thresholds, sample spacing, and alternating in / out / invalid segments
/// with lengths concentrated around the gap tolerance.
class Streams {
 public:
  struct Case {
    jatrain::Roi roi;
    TimeMs required = 0;
    TimeMs tolerance = 0;
    std::vector<GazeSample> samples;
  };

  explicit Streams(std::uint64_t seed) : rng_(seed) {}

  Case make_case() {
    Case c;
    if (coin(0.5)) c.roi = {jatrain::RoiId::avatar_eyes, jatrain::Circle{{uni(-0.5, 0.5), uni(-0.5, 0.5)}, uni(0.05, 0.3)}};
    else {
      const double x = uni(-0.8, 0.3), y = uni(-0.8, 0.3);
      c.roi = {jatrain::RoiId::object_left, jatrain::Rect{{x, y}, {x + uni(0.05, 0.5), y + uni(0.05, 0.5)}}};
    }
    c.required = irange(100, 2500);
    c.tolerance = std::min<TimeMs>(irange(0, 300), c.required - 1);
    const TimeMs period = irange(3, 34);
    const TimeMs jitter = coin(0.5) ? irange(0, std::max<TimeMs>(1, period / 3)) : 0;
    const TimeMs total = irange(200, 6000);

    TimeMs t = irange(0, 50);
    int kind = static_cast<int>(irange(0, 2));  // 0 in, 1 out, 2 invalid
    TimeMs seg_end = t + seg_length(c.tolerance);
    while (t < total) {
      if (t >= seg_end) {
        kind = coin(0.5) ? 0 : static_cast<int>(irange(1, 2));
        seg_end = t + seg_length(c.tolerance);
      }
      GazeSample s{t, 0.0, 0.0, kind != 2};
      const Point p = kind == 0 ? inside(c.roi) : outside(c.roi);
      s.x = p.x;
      s.y = p.y;
      c.samples.push_back(s);
      t += std::max<TimeMs>(1, period + (jitter ? irange(-jitter, jitter) : 0));
    }
    return c;
  }

 private:
  double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  TimeMs irange(TimeMs a, TimeMs b) { return std::uniform_int_distribution<TimeMs>(a, b)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  TimeMs seg_length(TimeMs tol) {
    switch (irange(0, 3)) {
      case 0: return irange(0, 2 * tol + 2);
      case 1: return std::max<TimeMs>(0, tol + irange(-5, 5));
      default: return irange(50, 2500);
    }
  }

  Point inside(const jatrain::Roi& roi) {
    if (const auto* c = std::get_if<jatrain::Circle>(&roi.shape)) {
      if (coin(0.05)) return {c->center.x + c->radius, c->center.y};  // on the boundary
      const double a = uni(0, 6.283185307179586), r = c->radius * std::sqrt(uni(0, 1)) * 0.999;
      return {c->center.x + r * std::cos(a), c->center.y + r * std::sin(a)};
    }
    const auto& r = std::get<jatrain::Rect>(roi.shape);
    if (coin(0.05)) return r.min;
    return {uni(r.min.x, r.max.x), uni(r.min.y, r.max.y)};
  }

  Point outside(const jatrain::Roi& roi) {
    // Anywhere in the plane outside the region (the plane extends past it).
    for (;;) {
      const Point p{uni(-1.5, 1.5), uni(-1.5, 1.5)};
      if (!jatrain::point_in_roi(GazeSample{0, p.x, p.y, true}, roi)) return p;
    }
  }

  std::mt19937_64 rng_;
};

}  // namespace test
