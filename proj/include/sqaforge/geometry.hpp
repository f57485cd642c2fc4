#pragma once

// Egocentric scene geometry. The ground plane is x-y with +z up; headings
// are measured counterclockwise from +x.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sqaforge/error.hpp"

namespace sqaforge {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}

struct SceneObject {
  std::string id;
  std::string label;
  Vec3 center;
  Vec3 half_extents;
};

struct Scene {
  std::string scene_id;
  std::vector<SceneObject> objects;

  const SceneObject* find(std::string_view id) const {
    for (const auto& obj : objects)
      if (obj.id == id) return &obj;
    return nullptr;
  }

  /// Throws InvariantViolation unless the scene is non-empty, ids are
  /// distinct and every box is finite with non-negative extents.
  void validate() const {
    if (objects.empty())
      throw Error(ErrorCode::InvariantViolation,
                  "scene '" + scene_id + "' has no objects");
    std::set<std::string> ids;
    for (const auto& obj : objects) {
      if (!ids.insert(obj.id).second)
        throw Error(ErrorCode::InvariantViolation,
                    "duplicate object id '" + obj.id + "' in scene '" +
                        scene_id + "'");
      if (!obj.center.finite() || !obj.half_extents.finite())
        throw Error(ErrorCode::InvariantViolation,
                    "non-finite geometry on object '" + obj.id + "'");
      if (obj.half_extents.x < 0 || obj.half_extents.y < 0 ||
          obj.half_extents.z < 0)
        throw Error(ErrorCode::InvariantViolation,
                    "negative half extent on object '" + obj.id + "'");
    }
  }
};

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Maps any finite angle into [0, 2*pi).
inline double normalize_heading(double rad) {
  double h = std::fmod(rad, kTwoPi);
  if (h < 0) h += kTwoPi;
  if (h >= kTwoPi) h = 0.0;
  return h;
}

class ObserverPose {
 public:
  ObserverPose() = default;
  ObserverPose(Vec3 position, double heading_rad)
      : position_(position), heading_(normalize_heading(heading_rad)) {}

  const Vec3& position() const { return position_; }
  double heading_rad() const { return heading_; }

  friend bool operator==(const ObserverPose&, const ObserverPose&) = default;

 private:
  Vec3 position_;
  double heading_ = 0.0;
};

enum class Quadrant { Front = 0, Right = 1, Back = 2, Left = 3 };

inline constexpr std::array<Quadrant, 4> kQuadrants = {
    Quadrant::Front, Quadrant::Right, Quadrant::Back, Quadrant::Left};

inline std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::Front: return "front";
    case Quadrant::Right: return "right";
    case Quadrant::Back: return "back";
    case Quadrant::Left: return "left";
  }
  return "front";
}

inline std::optional<Quadrant> parse_quadrant(std::string_view s) {
  for (auto q : kQuadrants)
    if (to_string(q) == s) return q;
  return std::nullopt;
}

/// Where a world-fixed object in quadrant `q` appears after the observer
/// turns `quarter_turns` x 90 degrees counterclockwise. One quarter turn is
/// Front->Right->Back->Left->Front.
inline Quadrant rotate_quadrant(Quadrant q, int quarter_turns) {
  int steps = ((quarter_turns % 4) + 4) % 4;
  return static_cast<Quadrant>((static_cast<int>(q) + steps) % 4);
}

inline constexpr double kDegenerateDistance = 1e-9;

inline double ground_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Signed angle in (-pi, pi] from the facing direction to the object
/// center, positive counterclockwise.
inline double relative_bearing(const Vec3& point, const ObserverPose& pose) {
  const double dx = point.x - pose.position().x;
  const double dy = point.y - pose.position().y;
  if (std::hypot(dx, dy) < kDegenerateDistance)
    throw Error(ErrorCode::DegeneratePosition,
                "object center coincides with observer in the ground plane");
  const double c = std::cos(pose.heading_rad());
  const double s = std::sin(pose.heading_rad());
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  double theta = std::atan2(across, along);
  if (theta <= -std::numbers::pi) theta = std::numbers::pi;
  return theta;
}

inline Quadrant classify_bearing(double theta) {
  constexpr double q1 = std::numbers::pi / 4;
  constexpr double q3 = 3 * std::numbers::pi / 4;
  if (theta > -q1 && theta <= q1) return Quadrant::Front;
  if (theta > q1 && theta <= q3) return Quadrant::Left;
  if (theta > -q3 && theta <= -q1) return Quadrant::Right;
  return Quadrant::Back;
}

inline Quadrant classify_quadrant(const SceneObject& obj,
                                  const ObserverPose& pose) {
  return classify_bearing(relative_bearing(obj.center, pose));
}

namespace detail {
inline bool is_degenerate(const SceneObject& obj, const ObserverPose& pose) {
  return ground_distance(obj.center, pose.position()) < kDegenerateDistance;
}
}  // namespace detail

/// Objects whose center coincides with the observer belong to no quadrant
/// and are skipped whenever a quadrant filter is given.
inline const SceneObject& nearest_object(
    const Scene& scene, const ObserverPose& pose,
    std::optional<Quadrant> quadrant = std::nullopt,
    std::optional<std::string_view> label = std::nullopt) {
  const SceneObject* best = nullptr;
  double best_dist = 0.0;
  for (const auto& obj : scene.objects) {
    if (label && obj.label != *label) continue;
    if (quadrant) {
      if (detail::is_degenerate(obj, pose)) continue;
      if (classify_quadrant(obj, pose) != *quadrant) continue;
    }
    const double d = ground_distance(obj.center, pose.position());
    if (!best || d < best_dist || (d == best_dist && obj.id < best->id)) {
      best = &obj;
      best_dist = d;
    }
  }
  if (!best) {
    std::string what = "no object";
    if (label) what += " labelled '" + std::string(*label) + "'";
    if (quadrant) what += " in quadrant " + std::string(to_string(*quadrant));
    throw Error(ErrorCode::NoMatch, what + " in scene '" + scene.scene_id + "'");
  }
  return *best;
}

/// Mirror of nearest_object: maximum distance, ties to the smallest id.
inline const SceneObject& farthest_object(
    const Scene& scene, const ObserverPose& pose,
    std::optional<Quadrant> quadrant = std::nullopt,
    std::optional<std::string_view> label = std::nullopt) {
  const SceneObject* best = nullptr;
  double best_dist = 0.0;
  for (const auto& obj : scene.objects) {
    if (label && obj.label != *label) continue;
    if (quadrant) {
      if (detail::is_degenerate(obj, pose)) continue;
      if (classify_quadrant(obj, pose) != *quadrant) continue;
    }
    const double d = ground_distance(obj.center, pose.position());
    if (!best || d > best_dist || (d == best_dist && obj.id < best->id)) {
      best = &obj;
      best_dist = d;
    }
  }
  if (!best)
    throw Error(ErrorCode::NoMatch,
                "no matching object in scene '" + scene.scene_id + "'");
  return *best;
}

/// The object the observer looks at most directly: smallest absolute
/// bearing among Front objects, then distance, then id.
inline const SceneObject& faced_object(const Scene& scene,
                                       const ObserverPose& pose) {
  const SceneObject* best = nullptr;
  double best_abs = 0.0;
  double best_dist = 0.0;
  for (const auto& obj : scene.objects) {
    if (detail::is_degenerate(obj, pose)) continue;
    const double theta = relative_bearing(obj.center, pose);
    if (classify_bearing(theta) != Quadrant::Front) continue;
    const double a = std::abs(theta);
    const double d = ground_distance(obj.center, pose.position());
    const bool better =
        !best || a < best_abs ||
        (a == best_abs && (d < best_dist || (d == best_dist && obj.id < best->id)));
    if (better) {
      best = &obj;
      best_abs = a;
      best_dist = d;
    }
  }
  if (!best)
    throw Error(ErrorCode::NoMatch,
                "nothing in front of the observer in scene '" + scene.scene_id + "'");
  return *best;
}

inline std::size_t count_in_quadrant(const Scene& scene,
                                     const ObserverPose& pose,
                                     Quadrant quadrant,
                                     std::string_view label) {
  std::size_t n = 0;
  for (const auto& obj : scene.objects) {
    if (obj.label != label || detail::is_degenerate(obj, pose)) continue;
    if (classify_quadrant(obj, pose) == quadrant) ++n;
  }
  return n;
}

inline bool exists_in_quadrant(const Scene& scene, const ObserverPose& pose,
                               Quadrant quadrant, std::string_view label) {
  return count_in_quadrant(scene, pose, quadrant, label) > 0;
}

inline std::size_t count_label(const Scene& scene, std::string_view label) {
  std::size_t n = 0;
  for (const auto& obj : scene.objects)
    if (obj.label == label) ++n;
  return n;
}

}  // namespace sqaforge
