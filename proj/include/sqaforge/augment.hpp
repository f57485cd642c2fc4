#pragma once

// Viewpoint-rotation augmentation. Rotations are counterclockwise seen from
// above. The observer keeps its position; the situation text is rewritten so
// it stays true for world-fixed objects, the question is kept verbatim and
// its answer is recomputed from geometry where that is possible.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqaforge/error.hpp"
#include "sqaforge/geometry.hpp"
#include "sqaforge/lexicon.hpp"
#include "sqaforge/metrics.hpp"
#include "sqaforge/oracle.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

inline constexpr std::array<int, 3> kRotations = {90, 180, 270};

inline ObserverPose rotate_pose(const ObserverPose& pose, int deg) {
  if (deg != 90 && deg != 180 && deg != 270)
    throw Error(ErrorCode::InvalidAngle, "rotation must be 90, 180 or 270 degrees, got " +
                                             std::to_string(deg));
  return ObserverPose(pose.position(), pose.heading_rad() + deg * std::numbers::pi / 180.0);
}

namespace detail {
inline ObserverPose turn(const ObserverPose& pose, int deg) {
  const int d = ((deg % 360) + 360) % 360;
  return d == 0 ? pose : rotate_pose(pose, d);
}

inline std::string indefinite_article_for(std::string_view word, std::string_view original) {
  const bool vowel = !word.empty() && std::string_view("aeiou").find(word.front()) != std::string_view::npos;
  return text::capitalize_like(vowel ? "an" : "a", original);
}
}  // namespace detail

/// Scene and post-rotation pose used to re-ground anchor phrases.
struct Grounding {
  const Scene* scene = nullptr;
  ObserverPose pose;
};

/// Rewrites every directional phrase for a counterclockwise turn of `deg`
/// degrees. A world-fixed object that was in quadrant q is afterwards in
/// rotate_quadrant(q, deg / 90). Anchor phrases ("facing a table") get the
/// object now faced, which needs a Grounding. Text between phrases is copied
/// byte for byte.
inline std::string remap_directional_terms(std::string_view text, int deg,
                                           const DirectionalLexicon& lexicon,
                                           const std::optional<Grounding>& grounding = std::nullopt) {
  if (deg % 90 != 0)
    throw Error(ErrorCode::InvalidAngle, "rotation must be a multiple of 90 degrees");
  if (auto uncovered = lexicon.uncovered_phrases(text); !uncovered.empty())
    throw Error(ErrorCode::UncoveredPhrase, "directional phrase missing from lexicon",
                std::move(uncovered));
  const int turns = deg / 90;
  std::string out;
  out.reserve(text.size());
  std::size_t cursor = 0;
  for (const auto& m : lexicon.find_all(text)) {
    if (m.pos < cursor) continue;
    out.append(text.substr(cursor, m.pos - cursor));
    const auto original = text.substr(m.pos, m.len);
    if (!m.entry.anchor) {
      const auto& phrase = lexicon.phrase_for(m.entry.family, rotate_quadrant(m.entry.quadrant, turns));
      out += text::capitalize_like(phrase, original);
      cursor = m.pos + m.len;
      continue;
    }
    out.append(original);
    cursor = m.pos + m.len;
    if (((turns % 4) + 4) % 4 == 0) continue;
    if (!grounding || !grounding->scene)
      throw Error(ErrorCode::RegroundingFailed,
                  "'" + std::string(original) + "' needs a scene to be re-grounded");
    // Anchor object: optional article, then a scene label.
    std::size_t p = cursor;
    while (p < text.size() && text[p] == ' ') ++p;
    std::string article;
    const std::size_t article_pos = p;
    for (std::string_view a : {"an", "a", "the"}) {
      if (text::iequals_at(text, p, a) && p + a.size() < text.size() && text[p + a.size()] == ' ') {
        article = std::string(text.substr(p, a.size()));
        p += a.size();
        while (p < text.size() && text[p] == ' ') ++p;
        break;
      }
    }
    const auto labels = find_labels(text.substr(p), *grounding->scene);
    if (labels.empty() || labels.front().pos != 0)
      throw Error(ErrorCode::RegroundingFailed,
                  "no scene object named after '" + std::string(original) + "'");
    std::string faced;
    try {
      faced = faced_object(*grounding->scene, grounding->pose).label;
    } catch (const Error&) {
      throw Error(ErrorCode::RegroundingFailed, "nothing is in front of the observer after rotation");
    }
    out.append(text.substr(cursor, (article.empty() ? p : article_pos) - cursor));
    if (!article.empty()) {
      const bool definite = to_lower(article) == "the";
      out += definite ? article : detail::indefinite_article_for(faced, article);
      out += ' ';
    }
    out += faced;
    cursor = p + labels.front().len;
  }
  out.append(text.substr(cursor));
  return out;
}

/// A claim the situation text makes about where something is.
struct SituationClaim {
  std::string label;
  Quadrant quadrant = Quadrant::Front;
  bool anchor = false;
  bool holds = false;
};

/// Pairs each directional phrase with the closest scene label in the same
/// clause and checks it against the pose. Phrases with no label are skipped.
inline std::vector<SituationClaim> situation_claims(std::string_view text, const Scene& scene,
                                                    const ObserverPose& pose,
                                                    const DirectionalLexicon& lexicon) {
  auto clause_of = [&](std::size_t pos) {
    std::size_t b = pos, e = pos;
    auto is_stop = [](char c) { return c == '.' || c == ',' || c == ';' || c == '!' || c == '?'; };
    while (b > 0 && !is_stop(text[b - 1])) --b;
    while (e < text.size() && !is_stop(text[e])) ++e;
    // " and " also separates clauses.
    for (std::size_t i = b; i + 5 <= e; ++i) {
      if (text::iequals_at(text, i, " and ")) {
        if (i + 5 <= pos) b = i + 5;
        else if (i >= pos) { e = i; break; }
      }
    }
    return std::pair{b, e};
  };
  const auto labels = find_labels(text, scene);
  std::vector<SituationClaim> claims;
  for (const auto& m : lexicon.find_all(text)) {
    const auto [b, e] = clause_of(m.pos);
    const LabelMention* best = nullptr;
    std::size_t best_gap = 0;
    for (const auto& l : labels) {
      if (l.pos < b || l.pos + l.len > e) continue;
      if (m.entry.anchor && l.pos < m.pos) continue;
      const std::size_t gap = l.pos < m.pos ? m.pos - (l.pos + l.len) : l.pos - (m.pos + m.len);
      if (!best || gap < best_gap) best = &l, best_gap = gap;
    }
    if (!best) continue;
    SituationClaim c{best->label, m.entry.quadrant, m.entry.anchor, false};
    c.holds = exists_in_quadrant(scene, pose, c.quadrant, c.label);
    claims.push_back(c);
  }
  return claims;
}

inline std::string variant_qid(const QARecord& rec, int rotation_deg) {
  return rec.group_id + "_r" + std::to_string(rotation_deg);
}

/// Rotates any record of a group by `deg` further degrees and revalidates
/// it. Used for the seed's three variants and for composition checks.
inline RotatedVariant rotate_record(const QARecord& rec, int deg, const Scene& scene,
                                    const DirectionalLexicon& lexicon) {
  if (rec.scene_id != scene.scene_id)
    throw Error(ErrorCode::InvalidArgument,
                "record '" + rec.qid + "' belongs to scene '" + rec.scene_id + "'");
  RotatedVariant v;
  v.record = rec;
  v.record.pose = detail::turn(rec.pose, deg);
  v.record.rotation_deg = ((rec.rotation_deg + deg) % 360 + 360) % 360;
  if (v.record.rotation_deg == 0)
    v.record.qid = rec.rotation_deg == 0 ? rec.qid : rec.group_id;
  else
    v.record.qid = variant_qid(rec, v.record.rotation_deg);
  const int turns = deg / 90;

  try {
    v.record.situation = remap_directional_terms(rec.situation, deg, lexicon,
                                                 Grounding{&scene, v.record.pose});
    if (auto uncovered = lexicon.uncovered_phrases(rec.question); !uncovered.empty())
      throw Error(ErrorCode::UncoveredPhrase, "directional phrase missing from lexicon",
                  std::move(uncovered));
  } catch (const Error& e) {
    v.validity = Validity::Invalid;
    v.needs_review = true;
    v.validation_note = e.what();
    for (const auto& d : e.details()) v.validation_note += " [" + d + "]";
    return v;
  }

  // Answers that are a bare direction move with the quadrant permutation.
  std::string textual = rec.answer;
  if (auto q = parse_quadrant(normalize_answer(rec.answer)))
    textual = std::string(to_string(rotate_quadrant(*q, turns)));

  if (!machine_checkable(rec)) {
    // Questions about objects that only exist in one quadrant cannot be
    // carried to another viewpoint.
    std::optional<Quadrant> asked;
    for (const auto& m : lexicon.find_all(rec.question)) {
      if (!m.entry.anchor) {
        asked = m.entry.quadrant;
        break;
      }
    }
    if (asked) {
      for (const auto& l : find_labels(rec.question, scene)) {
        if (!exists_in_quadrant(scene, rec.pose, *asked, l.label)) continue;
        if (!exists_in_quadrant(scene, v.record.pose, *asked, l.label)) {
          v.validity = Validity::Invalid;
          v.needs_review = true;
          v.validation_note = "view-specific: no '" + l.label + "' " + lexicon.inverse(*asked) +
                              " after rotating " + std::to_string(deg) + " degrees";
          return v;
        }
      }
    }
    v.record.answer = textual;
    v.validity = Validity::Valid;
    v.needs_review = true;
    v.validation_note = "answer not machine-checkable; kept from seed";
    return v;
  }

  std::string oracle;
  try {
    oracle = oracle_answer(v.record, scene, lexicon);
  } catch (const Error& e) {
    v.validity = Validity::Invalid;
    v.needs_review = true;
    v.validation_note = std::string("cannot re-ground after rotation: ") + e.what();
    return v;
  }
  if (normalize_answer(textual) == normalize_answer(oracle)) {
    v.record.answer = textual;
    v.validity = Validity::Valid;
  } else {
    v.record.answer = oracle;
    v.validity = Validity::AnswerCorrected;
    v.validation_note = "answer corrected from '" + textual + "' to '" + oracle + "'";
  }
  return v;
}

/// The three rotated variants (90, 180, 270 degrees) of a seed record.
inline std::vector<RotatedVariant> augment_seed(const QARecord& seed, const Scene& scene,
                                                const DirectionalLexicon& lexicon) {
  if (!seed.is_seed())
    throw Error(ErrorCode::InvalidArgument, "record '" + seed.qid + "' is not a seed");
  std::vector<RotatedVariant> out;
  out.reserve(kRotations.size());
  for (int deg : kRotations) out.push_back(rotate_record(seed, deg, scene, lexicon));
  return out;
}

/// Checks a seed against its own scene: the same validation as a variant
/// with a zero-degree turn.
inline RotatedVariant validate_seed(const QARecord& seed, const Scene& scene,
                                    const DirectionalLexicon& lexicon) {
  return rotate_record(seed, 0, scene, lexicon);
}

struct VariantCounts {
  std::size_t valid = 0;
  std::size_t answer_corrected = 0;
  std::size_t invalid = 0;
  std::size_t needs_review = 0;

  void add(const RotatedVariant& v) {
    switch (v.validity) {
      case Validity::Valid: ++valid; break;
      case Validity::AnswerCorrected: ++answer_corrected; break;
      case Validity::Invalid: ++invalid; break;
    }
    if (v.needs_review) ++needs_review;
  }
};

}  // namespace sqaforge
