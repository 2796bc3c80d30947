// gaze.hpp
//
// Scene geometry and dwell-based fixation registration.
//
// The scene is a normalized plane [-1,1] x [-1,1] with the avatar centred at
// the origin and three regions of interest: the avatar's eye region and one
// object on each side. A fixation registers once a tracker has accumulated
// `required_ms` of in-region gaze. Short off-region or invalid spans (up to
// `gap_tolerance_ms`) pause accumulation; longer ones reset it.
//
// Accumulation is sample-and-hold: a valid in-region sample counts as
// in-region until the next sample arrives, whatever that next sample is.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "jatrain/error.hpp"

namespace jatrain {

using TimeMs = std::int64_t;

struct GazeSample {
  TimeMs t_ms = 0;
  double x = 0.0;
  double y = 0.0;
  bool valid = false;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Circle {
  Point center;
  double radius = 0.0;
};

/// Axis-aligned rectangle; `min` is the lower-left corner.
struct Rect {
  Point min;
  Point max;
};

enum class RoiId { avatar_eyes, object_left, object_right };

inline constexpr std::array<RoiId, 3> kAllRois{RoiId::avatar_eyes, RoiId::object_left,
                                               RoiId::object_right};

constexpr std::string_view to_string(RoiId id) {
  switch (id) {
    case RoiId::avatar_eyes: return "avatar_eyes";
    case RoiId::object_left: return "object_left";
    case RoiId::object_right: return "object_right";
  }
  return "?";
}

inline RoiId roi_from_string(std::string_view s) {
  for (auto id : kAllRois) {
    if (to_string(id) == s) return id;
  }
  throw InputError("unknown roi id '" + std::string(s) + "'");
}

struct Roi {
  RoiId id = RoiId::avatar_eyes;
  std::variant<Circle, Rect> shape;
};

inline void validate(const Roi& roi) {
  const std::string name(to_string(roi.id));
  if (const auto* c = std::get_if<Circle>(&roi.shape)) {
    if (!(c->radius > 0.0)) throw ConfigError(name + ".radius", "must be > 0");
  } else {
    const auto& r = std::get<Rect>(roi.shape);
    if (!(r.min.x < r.max.x) || !(r.min.y < r.max.y))
      throw ConfigError(name + ".rect", "min corner must be below max corner on both axes");
  }
}

/// Closed-region containment. Precondition: sample.valid.
inline bool point_in_roi(const GazeSample& sample, const Roi& roi) {
  if (const auto* c = std::get_if<Circle>(&roi.shape)) {
    const double dx = sample.x - c->center.x;
    const double dy = sample.y - c->center.y;
    return dx * dx + dy * dy <= c->radius * c->radius;
  }
  const auto& r = std::get<Rect>(roi.shape);
  return sample.x >= r.min.x && sample.x <= r.max.x && sample.y >= r.min.y && sample.y <= r.max.y;
}

namespace detail {

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline bool intersects(const Circle& a, const Circle& b) {
  const double dx = a.center.x - b.center.x;
  const double dy = a.center.y - b.center.y;
  const double r = a.radius + b.radius;
  return dx * dx + dy * dy <= r * r;
}

inline bool intersects(const Rect& a, const Rect& b) {
  return a.min.x <= b.max.x && b.min.x <= a.max.x && a.min.y <= b.max.y && b.min.y <= a.max.y;
}

inline bool intersects(const Circle& c, const Rect& r) {
  const double nx = clamp(c.center.x, r.min.x, r.max.x);
  const double ny = clamp(c.center.y, r.min.y, r.max.y);
  const double dx = c.center.x - nx;
  const double dy = c.center.y - ny;
  return dx * dx + dy * dy <= c.radius * c.radius;
}

inline bool intersects(const Rect& r, const Circle& c) { return intersects(c, r); }

}  // namespace detail

inline bool rois_overlap(const Roi& a, const Roi& b) {
  return std::visit([](const auto& x, const auto& y) { return detail::intersects(x, y); }, a.shape,
                    b.shape);
}

/// The three-region layout shared by the engine, the simulator and the mirror.
class Scene {
 public:
  Scene(Roi eyes, Roi left, Roi right) : rois_{std::move(eyes), std::move(left), std::move(right)} {
    for (std::size_t i = 0; i < rois_.size(); ++i) {
      if (rois_[i].id != kAllRois[i])
        throw ConfigError("scene", "regions must be given as avatar_eyes, object_left, object_right");
      validate(rois_[i]);
    }
    for (std::size_t i = 0; i < rois_.size(); ++i)
      for (std::size_t j = i + 1; j < rois_.size(); ++j)
        if (rois_overlap(rois_[i], rois_[j]))
          throw ConfigError("scene", std::string(to_string(rois_[i].id)) + " overlaps " +
                                         std::string(to_string(rois_[j].id)));
  }

  static Scene standard() {
    return Scene{Roi{RoiId::avatar_eyes, Circle{{0.0, 0.35}, 0.12}},
                 Roi{RoiId::object_left, Rect{{-0.85, -0.35}, {-0.45, 0.05}}},
                 Roi{RoiId::object_right, Rect{{0.45, -0.35}, {0.85, 0.05}}}};
  }

  const Roi& roi(RoiId id) const { return rois_[static_cast<std::size_t>(id)]; }
  const std::array<Roi, 3>& rois() const noexcept { return rois_; }

  bool inside_any(const GazeSample& s) const {
    if (!s.valid) return false;
    for (const auto& r : rois_)
      if (point_in_roi(s, r)) return true;
    return false;
  }

 private:
  std::array<Roi, 3> rois_;
};

struct DwellConfig {
  TimeMs required_ms = 2000;
  TimeMs gap_tolerance_ms = 100;
  /// When set, tolerated gaps count toward `required_ms` on resumption.
  bool count_gap_time = false;

  void validate() const {
    if (required_ms <= 0) throw ConfigError("required_ms", "must be > 0");
    if (gap_tolerance_ms < 0) throw ConfigError("gap_tolerance_ms", "must be >= 0");
    if (gap_tolerance_ms >= required_ms)
      throw ConfigError("gap_tolerance_ms", "must be < required_ms");
  }
};

struct FixationEvent {
  RoiId roi_id = RoiId::avatar_eyes;
  TimeMs streak_start_ms = 0;
  TimeMs registered_ms = 0;

  friend bool operator==(const FixationEvent&, const FixationEvent&) = default;
};

/// Single-shot dwell accumulator for one region. Armed on construction (or
/// rearm()); emits at most one FixationEvent per arming.
class DwellTracker {
 public:
  DwellTracker(Roi roi, DwellConfig cfg) : roi_(std::move(roi)), cfg_(cfg) {
    jatrain::validate(roi_);
    cfg_.validate();
  }

  std::optional<FixationEvent> update(const GazeSample& s) {
    if (has_last_ && s.t_ms <= last_t_)
      throw OrderingError("gaze sample at " + std::to_string(s.t_ms) +
                          " ms does not follow previous sample at " + std::to_string(last_t_) +
                          " ms");
    const bool inside = s.valid && point_in_roi(s, roi_);
    const TimeMs prev_t = has_last_ ? last_t_ : s.t_ms;
    last_t_ = s.t_ms;
    has_last_ = true;

    if (fired_) return std::nullopt;

    if (active_) {
      if (last_inside_) {
        accumulated_ += s.t_ms - prev_t;
        if (!inside) off_since_ = s.t_ms;
      } else {
        const TimeMs span = s.t_ms - off_since_;
        if (span > cfg_.gap_tolerance_ms) {
          active_ = false;
          accumulated_ = 0;
        } else if (inside && cfg_.count_gap_time) {
          accumulated_ += span;
        }
      }
    }
    if (inside && !active_) {
      active_ = true;
      streak_start_ = s.t_ms;
      accumulated_ = 0;
    }
    last_inside_ = inside;

    if (active_ && accumulated_ >= cfg_.required_ms) {
      fired_ = true;
      return FixationEvent{roi_.id, streak_start_, s.t_ms};
    }
    return std::nullopt;
  }

  /// Forget the current streak and allow one more registration.
  void rearm() {
    active_ = false;
    fired_ = false;
    last_inside_ = false;
    accumulated_ = 0;
    // Ordering is a stream property, so last_t_ survives re-arming.
  }

  TimeMs accumulated_ms() const noexcept { return accumulated_; }
  bool in_streak() const noexcept { return active_; }
  bool fired() const noexcept { return fired_; }
  std::optional<TimeMs> streak_start_ms() const {
    return active_ ? std::optional<TimeMs>(streak_start_) : std::nullopt;
  }
  const Roi& roi() const noexcept { return roi_; }
  const DwellConfig& config() const noexcept { return cfg_; }

 private:
  Roi roi_;
  DwellConfig cfg_;
  TimeMs last_t_ = 0;
  bool has_last_ = false;
  bool active_ = false;
  bool last_inside_ = false;
  bool fired_ = false;
  TimeMs streak_start_ = 0;
  TimeMs accumulated_ = 0;
  TimeMs off_since_ = 0;
};

}  // namespace jatrain
