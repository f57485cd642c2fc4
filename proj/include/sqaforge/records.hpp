#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "sqaforge/error.hpp"
#include "sqaforge/geometry.hpp"

namespace sqaforge {

enum class Category {
  Measurement,
  Color,
  Number,
  SpatialRelation,
  Shape,
  State,
  Object,
  Visibility,
  Navigation,
  Reasoning,
  Other,
};

inline constexpr std::array<Category, 11> kCategories = {
    Category::Measurement, Category::Color,     Category::Number,
    Category::SpatialRelation, Category::Shape, Category::State,
    Category::Object,      Category::Visibility, Category::Navigation,
    Category::Reasoning,   Category::Other};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::Measurement: return "measurement";
    case Category::Color: return "color";
    case Category::Number: return "number";
    case Category::SpatialRelation: return "spatial_relation";
    case Category::Shape: return "shape";
    case Category::State: return "state";
    case Category::Object: return "object";
    case Category::Visibility: return "visibility";
    case Category::Navigation: return "navigation";
    case Category::Reasoning: return "reasoning";
    case Category::Other: return "other";
  }
  return "other";
}

inline Category parse_category(std::string_view s) {
  for (auto c : kCategories)
    if (to_string(c) == s) return c;
  throw Error(ErrorCode::ParseError, "unknown category '" + std::string(s) + "'");
}

/// Categories whose answers cannot be recomputed from box geometry.
inline bool is_subjective(Category c) {
  return c == Category::Reasoning || c == Category::State ||
         c == Category::Shape;
}

enum class VrsType { Distance, Direction, Counting, Existence };

inline constexpr std::array<VrsType, 4> kVrsTypes = {
    VrsType::Distance, VrsType::Direction, VrsType::Counting,
    VrsType::Existence};

inline std::string_view to_string(VrsType t) {
  switch (t) {
    case VrsType::Distance: return "distance";
    case VrsType::Direction: return "direction";
    case VrsType::Counting: return "counting";
    case VrsType::Existence: return "existence";
  }
  return "distance";
}

inline VrsType parse_vrs_type(std::string_view s) {
  for (auto t : kVrsTypes)
    if (to_string(t) == s) return t;
  throw Error(ErrorCode::ParseError, "unknown vrs_type '" + std::string(s) + "'");
}

inline bool is_valid_rotation(int deg) {
  return deg == 0 || deg == 90 || deg == 180 || deg == 270;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

struct QARecord {
  std::string qid;
  std::string scene_id;
  ObserverPose pose;
  std::string situation;
  std::string question;
  std::string answer;
  Category category = Category::Other;
  std::optional<VrsType> vrs_type;
  std::string group_id;
  int rotation_deg = 0;

  bool is_seed() const { return rotation_deg == 0; }
};

enum class Validity { Valid, AnswerCorrected, Invalid };

inline std::string_view to_string(Validity v) {
  switch (v) {
    case Validity::Valid: return "valid";
    case Validity::AnswerCorrected: return "answer_corrected";
    case Validity::Invalid: return "invalid";
  }
  return "invalid";
}

inline Validity parse_validity(std::string_view s) {
  for (auto v : {Validity::Valid, Validity::AnswerCorrected, Validity::Invalid})
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::ParseError, "unknown validity '" + std::string(s) + "'");
}

struct RotatedVariant {
  QARecord record;
  Validity validity = Validity::Valid;
  std::string validation_note;
  /// Set when the answer could not be machine-checked and a person has to
  /// look at it.
  bool needs_review = false;
};

enum class PredictionVariant { Full, Blind, TextOnlyLLM };

inline std::string_view to_string(PredictionVariant v) {
  switch (v) {
    case PredictionVariant::Full: return "full";
    case PredictionVariant::Blind: return "blind";
    case PredictionVariant::TextOnlyLLM: return "llm";
  }
  return "full";
}

inline PredictionVariant parse_prediction_variant(std::string_view s) {
  for (auto v : {PredictionVariant::Full, PredictionVariant::Blind,
                 PredictionVariant::TextOnlyLLM})
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::ParseError, "unknown variant '" + std::string(s) + "'");
}

struct PredictionRecord {
  std::string qid;
  std::string model_id;
  PredictionVariant variant = PredictionVariant::Full;
  std::string predicted_answer;
};

}  // namespace sqaforge
