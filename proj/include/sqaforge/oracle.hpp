#pragma once

// Geometry-backed answers for the four machine-checkable question types.
// Questions are read with a small pattern grammar: a directional phrase from
// the lexicon selects a quadrant, the longest scene label mentioned selects
// an object class.

#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "sqaforge/error.hpp"
#include "sqaforge/geometry.hpp"
#include "sqaforge/lexicon.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

struct LabelMention {
  std::size_t pos = 0;
  std::size_t len = 0;
  std::string label;
};

/// Finds scene labels in text as whole words, allowing a plural "s"/"es".
/// Longer labels win over shorter ones at the same position.
inline std::vector<LabelMention> find_labels(std::string_view text, const Scene& scene) {
  std::set<std::string> labels;
  for (const auto& o : scene.objects) labels.insert(o.label);
  std::vector<std::string> ordered(labels.begin(), labels.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  std::vector<LabelMention> out;
  std::size_t i = 0;
  while (i < text.size()) {
    bool hit = false;
    if (text::boundary_before(text, i)) {
      for (const auto& label : ordered) {
        if (!text::iequals_at(text, i, label)) continue;
        for (std::string_view suffix : {"es", "s", ""}) {
          const std::size_t end = i + label.size();
          if (!suffix.empty() && !text::iequals_at(text, end, suffix)) continue;
          if (text::boundary_after(text, end + suffix.size())) {
            out.push_back({i, label.size() + suffix.size(), label});
            hit = true;
            break;
          }
        }
        if (hit) break;
      }
    }
    if (hit) i = out.back().pos + out.back().len;
    else ++i;
  }
  return out;
}

struct SceneQuery {
  VrsType type = VrsType::Existence;
  std::optional<Quadrant> quadrant;
  std::optional<std::string> label;
  bool farthest = false;
};

/// Reads the structured query behind a question of the given type.
inline SceneQuery parse_query(std::string_view question, VrsType type, const Scene& scene,
                              const DirectionalLexicon& lexicon) {
  SceneQuery q;
  q.type = type;
  for (const auto& m : lexicon.find_all(question)) {
    if (m.entry.anchor) continue;
    q.quadrant = m.entry.quadrant;
    break;
  }
  std::size_t best_len = 0;
  for (const auto& m : find_labels(question, scene)) {
    if (m.label.size() > best_len) {
      q.label = m.label;
      best_len = m.label.size();
    }
  }
  q.farthest = text::find_word(question, "farthest").has_value() ||
               text::find_word(question, "furthest").has_value();
  return q;
}

/// Answer string the oracle gives for a query. Throws NoMatch when the
/// query refers to something absent from the scene at this pose.
inline std::string answer_query(const SceneQuery& q, const Scene& scene, const ObserverPose& pose) {
  switch (q.type) {
    case VrsType::Distance: {
      const auto& obj = q.farthest ? farthest_object(scene, pose, q.quadrant)
                                   : nearest_object(scene, pose, q.quadrant);
      return obj.label;
    }
    case VrsType::Direction: {
      if (q.quadrant) return nearest_object(scene, pose, q.quadrant).label;
      if (!q.label)
        throw Error(ErrorCode::NoMatch, "direction question names neither a direction nor an object");
      const auto& obj = nearest_object(scene, pose, std::nullopt, *q.label);
      return std::string(to_string(classify_quadrant(obj, pose)));
    }
    case VrsType::Counting: {
      if (!q.label) throw Error(ErrorCode::NoMatch, "counting question names no scene object");
      const auto n = q.quadrant ? count_in_quadrant(scene, pose, *q.quadrant, *q.label)
                                : count_label(scene, *q.label);
      return std::to_string(n);
    }
    case VrsType::Existence: {
      if (!q.label) throw Error(ErrorCode::NoMatch, "existence question names no scene object");
      const bool yes = q.quadrant ? exists_in_quadrant(scene, pose, *q.quadrant, *q.label)
                                  : count_label(scene, *q.label) > 0;
      return yes ? "yes" : "no";
    }
  }
  throw Error(ErrorCode::NoMatch, "unsupported question type");
}

inline bool machine_checkable(const QARecord& rec) {
  return rec.vrs_type.has_value() && !is_subjective(rec.category);
}

inline std::string oracle_answer(const QARecord& rec, const Scene& scene,
                                 const DirectionalLexicon& lexicon) {
  if (!rec.vrs_type)
    throw Error(ErrorCode::NoMatch, "record '" + rec.qid + "' has no vrs_type");
  return answer_query(parse_query(rec.question, *rec.vrs_type, scene, lexicon), scene, rec.pose);
}

}  // namespace sqaforge
