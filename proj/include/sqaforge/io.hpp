#pragma once

// JSON / JSONL readers and writers for scenes, QA records, predictions and
// token log-probabilities.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqaforge/error.hpp"
#include "sqaforge/geometry.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

using json = nlohmann::json;

namespace detail {
inline double finite_number(const json& j, const char* what) {
  if (!j.is_number()) throw Error(ErrorCode::ParseError, std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw Error(ErrorCode::ParseError, std::string(what) + " must be finite");
  return v;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "' has the wrong type");
  }
}
}  // namespace detail

inline Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorCode::ParseError, "expected [x, y, z]");
  return {detail::finite_number(j[0], "x"), detail::finite_number(j[1], "y"),
          detail::finite_number(j[2], "z")};
}

inline json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Scene scene_from_json(const json& j) {
  Scene s;
  s.scene_id = detail::field<std::string>(j, "scene_id");
  if (!j.contains("objects") || !j.at("objects").is_array())
    throw Error(ErrorCode::ParseError, "scene needs an 'objects' array");
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    obj.id = detail::field<std::string>(o, "id");
    obj.label = to_lower(detail::field<std::string>(o, "label"));
    obj.center = vec3_from_json(o.at("center"));
    obj.half_extents = vec3_from_json(o.at("half_extents"));
    s.objects.push_back(std::move(obj));
  }
  s.validate();
  return s;
}

inline json to_json(const Scene& s) {
  json objs = json::array();
  for (const auto& o : s.objects)
    objs.push_back({{"id", o.id}, {"label", o.label}, {"center", to_json(o.center)},
                    {"half_extents", to_json(o.half_extents)}});
  return {{"scene_id", s.scene_id}, {"objects", objs}};
}

inline json to_json(const ObserverPose& p) {
  return {{"position", to_json(p.position())}, {"heading_rad", p.heading_rad()}};
}

inline ObserverPose pose_from_json(const json& j) {
  if (!j.contains("position") || !j.contains("heading_rad"))
    throw Error(ErrorCode::ParseError, "pose needs 'position' and 'heading_rad'");
  return ObserverPose(vec3_from_json(j.at("position")),
                      detail::finite_number(j.at("heading_rad"), "heading_rad"));
}

inline QARecord qa_from_json(const json& j) {
  QARecord r;
  r.qid = detail::field<std::string>(j, "qid");
  r.scene_id = detail::field<std::string>(j, "scene_id");
  if (!j.contains("pose")) throw Error(ErrorCode::ParseError, "missing field 'pose'");
  r.pose = pose_from_json(j.at("pose"));
  r.situation = detail::field<std::string>(j, "situation");
  r.question = detail::field<std::string>(j, "question");
  r.answer = to_lower(detail::field<std::string>(j, "answer"));
  r.category = parse_category(detail::field<std::string>(j, "category"));
  if (j.contains("vrs_type") && !j.at("vrs_type").is_null())
    r.vrs_type = parse_vrs_type(j.at("vrs_type").get<std::string>());
  r.group_id = j.contains("group_id") ? detail::field<std::string>(j, "group_id") : r.qid;
  r.rotation_deg = j.contains("rotation_deg") ? detail::field<int>(j, "rotation_deg") : 0;
  if (!is_valid_rotation(r.rotation_deg))
    throw Error(ErrorCode::ParseError, "rotation_deg must be 0, 90, 180 or 270");
  return r;
}

inline json to_json(const QARecord& r) {
  return {{"qid", r.qid},
          {"scene_id", r.scene_id},
          {"pose", to_json(r.pose)},
          {"situation", r.situation},
          {"question", r.question},
          {"answer", r.answer},
          {"category", std::string(to_string(r.category))},
          {"vrs_type", r.vrs_type ? json(std::string(to_string(*r.vrs_type))) : json(nullptr)},
          {"group_id", r.group_id},
          {"rotation_deg", r.rotation_deg}};
}

/// Variant lines are QA records with the machine verdict alongside.
inline json to_json(const RotatedVariant& v) {
  auto j = to_json(v.record);
  j["validity"] = std::string(to_string(v.validity));
  j["validation_note"] = v.validation_note;
  j["needs_review"] = v.needs_review;
  return j;
}

inline RotatedVariant variant_from_json(const json& j) {
  RotatedVariant v;
  v.record = qa_from_json(j);
  if (j.contains("validity")) v.validity = parse_validity(j.at("validity").get<std::string>());
  if (j.contains("validation_note")) v.validation_note = j.at("validation_note").get<std::string>();
  if (j.contains("needs_review")) v.needs_review = j.at("needs_review").get<bool>();
  return v;
}

inline PredictionRecord prediction_from_json(const json& j) {
  PredictionRecord p;
  p.qid = detail::field<std::string>(j, "qid");
  p.model_id = detail::field<std::string>(j, "model_id");
  p.variant = parse_prediction_variant(detail::field<std::string>(j, "variant"));
  p.predicted_answer = detail::field<std::string>(j, "predicted_answer");
  return p;
}

inline json to_json(const PredictionRecord& p) {
  return {{"qid", p.qid},
          {"model_id", p.model_id},
          {"variant", std::string(to_string(p.variant))},
          {"predicted_answer", p.predicted_answer}};
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

/// Calls `fn(json, line_number)` for each non-blank line. Parse failures
/// and errors thrown by `fn` are reported with the 1-based line number.
inline void for_each_jsonl(std::istream& in, const std::string& source,
                           const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": " + e.what(),
                  {std::to_string(lineno)});
    }
    try {
      fn(j, lineno);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ParseError) throw;
      throw Error(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": " + e.what(),
                  {std::to_string(lineno)});
    }
  }
}

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  std::vector<T> out;
  for_each_jsonl(in, path.string(), [&](const json& j, std::size_t) { out.push_back(parse(j)); });
  return out;
}

inline std::vector<QARecord> read_qa_jsonl(const std::filesystem::path& path) {
  return read_jsonl<QARecord>(path, qa_from_json);
}

inline std::vector<PredictionRecord> read_predictions_jsonl(const std::filesystem::path& path) {
  return read_jsonl<PredictionRecord>(path, prediction_from_json);
}

inline std::vector<RotatedVariant> read_variants_jsonl(const std::filesystem::path& path) {
  return read_jsonl<RotatedVariant>(path, variant_from_json);
}

template <typename Range>
void write_jsonl(const std::filesystem::path& path, const Range& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  for (const auto& item : items) out << to_json(item).dump() << '\n';
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace sqaforge
