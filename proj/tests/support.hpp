#pragma once

// Fixture builders shared by the unit tests and the acceptance binary.

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sqaforge/augment.hpp"
#include "sqaforge/geometry.hpp"
#include "sqaforge/lexicon.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge::testing {

inline SceneObject box(std::string id, std::string label, double x, double y) {
  return {std::move(id), std::move(label), {x, y, 0.5}, {0.2, 0.2, 0.5}};
}

/// Observer at the origin facing +x: trash can ahead, whiteboard right,
/// table behind, door left.
inline Scene classroom() {
  return {"classroom",
          {box("o1", "trash can", 2.0, 0.0), box("o2", "whiteboard", 0.0, -2.0), box("o3", "table", -2.0, 0.0),
           box("o4", "door", 0.0, 2.0)}};
}

inline QARecord seed_record(std::string qid, const Scene& scene, ObserverPose pose, std::string situation,
                            std::string question, std::string answer, Category cat, std::optional<VrsType> type) {
  QARecord r;
  r.qid = qid;
  r.group_id = std::move(qid);
  r.scene_id = scene.scene_id;
  r.pose = pose;
  r.situation = std::move(situation);
  r.question = std::move(question);
  r.answer = std::move(answer);
  r.category = cat;
  r.vrs_type = type;
  r.rotation_deg = 0;
  return r;
}

inline const std::vector<std::string>& label_pool() {
  static const std::vector<std::string> pool = {"chair",  "table", "lamp", "sofa",    "door",      "window",
                                                "shelf",  "plant", "bed",  "desk",    "trash can", "monitor",
                                                "cabinet", "box",  "sink", "printer", "piano",     "mirror"};
  return pool;
}

/// Random scene around `pose` with at least one object per quadrant.
/// Bearings keep `margin` radians away from quadrant boundaries so that
/// floating-point rotation never moves an object across one.
inline Scene random_scene(std::mt19937_64& rng, const ObserverPose& pose, std::size_t n_objects,
                          std::string scene_id = "rand", double margin = 0.05) {
  std::uniform_real_distribution<double> within(-std::numbers::pi / 4 + margin, std::numbers::pi / 4 - margin);
  std::uniform_real_distribution<double> dist(0.5, 6.0);
  std::uniform_int_distribution<std::size_t> pick_label(0, label_pool().size() - 1);
  std::uniform_int_distribution<int> pick_q(0, 3);
  Scene s;
  s.scene_id = std::move(scene_id);
  for (std::size_t i = 0; i < n_objects; ++i) {
    // Quadrant q is centred on bearing q * 90 degrees clockwise.
    const int q = i < 4 ? static_cast<int>(i) : pick_q(rng);
    const double bearing = -q * std::numbers::pi / 2 + within(rng);
    const double heading = pose.heading_rad() + bearing;
    const double d = dist(rng);
    s.objects.push_back(box("obj" + std::to_string(i), label_pool()[pick_label(rng)],
                            pose.position().x + d * std::cos(heading), pose.position().y + d * std::sin(heading)));
  }
  return s;
}

inline std::string plural(const std::string& label) {
  const char last = label.back();
  return label + ((last == 's' || last == 'x') ? "es" : "s");
}

/// Random seed record whose answer the geometric oracle confirms at the
/// seed pose. The situation anchors on the faced object and states one
/// true directional fact.
inline QARecord random_seed(std::mt19937_64& rng, const Scene& scene, const ObserverPose& pose,
                            const DirectionalLexicon& lex, const std::string& qid) {
  std::uniform_int_distribution<std::size_t> fam(0, lex.family_count() - 1);
  std::uniform_int_distribution<std::size_t> obj(0, scene.objects.size() - 1);
  std::uniform_int_distribution<int> quad(0, 3), kind(0, 4);
  auto phrase = [&](Quadrant q) { return lex.phrase_for(fam(rng), q); };

  const auto& faced = faced_object(scene, pose);
  const auto& other = scene.objects[obj(rng)];
  const auto other_q = classify_quadrant(other, pose);
  std::string situation = "I am facing a " + faced.label + " and the " + other.label + " is " + phrase(other_q) + ".";

  const auto q = static_cast<Quadrant>(quad(rng));
  const auto& target = scene.objects[obj(rng)];
  QARecord r;
  switch (kind(rng)) {
    case 0:
      r = seed_record(qid, scene, pose, situation, "What is " + phrase(q) + "?",
                      nearest_object(scene, pose, q).label, Category::Object, VrsType::Direction);
      break;
    case 1:
      r = seed_record(qid, scene, pose, situation, "Where is the " + target.label + "?",
                      std::string(to_string(classify_quadrant(nearest_object(scene, pose, std::nullopt, target.label), pose))),
                      Category::SpatialRelation, VrsType::Direction);
      break;
    case 2: {
      const bool far = quad(rng) % 2 == 0;
      r = seed_record(qid, scene, pose, situation,
                      std::string("What is the ") + (far ? "farthest" : "nearest") + " object " + phrase(q) + "?",
                      far ? farthest_object(scene, pose, q).label : nearest_object(scene, pose, q).label,
                      Category::Measurement, VrsType::Distance);
      break;
    }
    case 3:
      r = seed_record(qid, scene, pose, situation, "How many " + plural(target.label) + " are " + phrase(q) + "?",
                      std::to_string(count_in_quadrant(scene, pose, q, target.label)), Category::Number,
                      VrsType::Counting);
      break;
    default:
      r = seed_record(qid, scene, pose, situation, "Is there a " + target.label + " " + phrase(q) + "?",
                      exists_in_quadrant(scene, pose, q, target.label) ? "yes" : "no", Category::Visibility,
                      VrsType::Existence);
      break;
  }
  return r;
}

/// Smallest absolute difference between two headings, in radians.
inline double heading_error(double a, double b) {
  const double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("sqaforge_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sqaforge::testing
