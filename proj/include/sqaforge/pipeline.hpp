#pragma once

// Dataset ingestion, mock answerers for desk-scale runs and the consolidated
// statistics report.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sqaforge/error.hpp"
#include "sqaforge/io.hpp"
#include "sqaforge/lexicon.hpp"
#include "sqaforge/metrics.hpp"
#include "sqaforge/oracle.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

struct BenchmarkData {
  std::map<std::string, Scene> scenes;
  std::vector<QARecord> records;

  const Scene& scene_for(const QARecord& r) const {
    auto it = scenes.find(r.scene_id);
    if (it == scenes.end())
      throw Error(ErrorCode::DanglingSceneRef, "record '" + r.qid + "' references unknown scene '" + r.scene_id + "'",
                  {r.qid});
    return it->second;
  }

  json summary() const {
    std::set<std::string> groups;
    std::size_t seeds = 0;
    for (const auto& r : records) {
      groups.insert(r.group_id);
      seeds += r.is_seed() ? 1 : 0;
    }
    return {{"scenes", scenes.size()}, {"records", records.size()}, {"groups", groups.size()}, {"seeds", seeds}};
  }
};

namespace detail {
struct IssueList {
  std::vector<std::pair<ErrorCode, std::string>> items;
  void add(ErrorCode c, std::string msg) { items.emplace_back(c, std::move(msg)); }
  void raise_if_any(const std::string& what) const {
    if (items.empty()) return;
    std::vector<std::string> details;
    for (const auto& [c, m] : items) details.push_back(std::string(to_string(c)) + ": " + m);
    throw Error(items.front().first, what + " (" + std::to_string(items.size()) + " problems): " + items.front().second,
                std::move(details));
  }
};
}  // namespace detail

/// Checks records against each other and against the scenes. Every problem
/// is collected; the thrown error carries the code of the first one.
inline void validate_records(const BenchmarkData& data) {
  detail::IssueList issues;
  std::set<std::string> qids;
  struct GroupInfo {
    std::string scene_id;
    Vec3 position;
    std::optional<VrsType> vrs_type;
    std::set<int> rotations;
  };
  std::map<std::string, GroupInfo> groups;
  for (const auto& r : data.records) {
    if (!qids.insert(r.qid).second) issues.add(ErrorCode::InvariantViolation, "duplicate qid '" + r.qid + "'");
    if (!data.scenes.contains(r.scene_id))
      issues.add(ErrorCode::DanglingSceneRef, "record '" + r.qid + "' references unknown scene '" + r.scene_id + "'");
    if (normalize_answer(r.answer).empty())
      issues.add(ErrorCode::InvariantViolation, "record '" + r.qid + "' has an empty answer");
    auto [it, fresh] = groups.try_emplace(r.group_id, GroupInfo{r.scene_id, r.pose.position(), r.vrs_type, {}});
    auto& g = it->second;
    if (!fresh && (g.scene_id != r.scene_id || !(g.position == r.pose.position()) || g.vrs_type != r.vrs_type))
      issues.add(ErrorCode::InvariantViolation,
                 "record '" + r.qid + "' disagrees with its group '" + r.group_id + "' on scene, position or type");
    if (!g.rotations.insert(r.rotation_deg).second)
      issues.add(ErrorCode::InvariantViolation,
                 "group '" + r.group_id + "' has two records at rotation " + std::to_string(r.rotation_deg));
  }
  issues.raise_if_any("dataset failed validation");
}

/// Scene files hold one scene object or an array of them.
inline BenchmarkData ingest(std::span<const std::filesystem::path> scene_files,
                            const std::filesystem::path& qa_file) {
  BenchmarkData data;
  for (const auto& path : scene_files) {
    const auto j = read_json_file(path);
    auto add = [&](const json& s) {
      Scene scene;
      try {
        scene = scene_from_json(s);
      } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what(), e.details());
      }
      if (!data.scenes.emplace(scene.scene_id, scene).second)
        throw Error(ErrorCode::InvariantViolation, "scene '" + scene.scene_id + "' defined twice");
    };
    if (j.is_array()) {
      for (const auto& s : j) add(s);
    } else {
      add(j);
    }
  }
  data.records = read_qa_jsonl(qa_file);
  validate_records(data);
  return data;
}

/// Answers machine-checkable questions from scene geometry. Anything else
/// gets the empty (abstain) answer.
class GeometricOracle {
 public:
  GeometricOracle(const std::map<std::string, Scene>& scenes, DirectionalLexicon lexicon)
      : scenes_(&scenes), lexicon_(std::move(lexicon)) {}

  std::string answer(const QARecord& r) const {
    auto it = scenes_->find(r.scene_id);
    if (it == scenes_->end() || !r.vrs_type) return {};
    try {
      return oracle_answer(r, it->second, lexicon_);
    } catch (const Error&) {
      return {};
    }
  }

 private:
  const std::map<std::string, Scene>* scenes_;
  DirectionalLexicon lexicon_;
};

/// splitmix64 step; stable across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

/// Text-only answer prior learned from a training split. It never looks at
/// a scene. `Majority` always returns the most frequent answer of the
/// question's (category, vrs_type) bucket; `Sample` draws from the bucket's
/// answer frequencies with a per-question deterministic stream, which makes
/// per-question correctness independent across a rotation group.
class BlindPrior {
 public:
  enum class Mode { Majority, Sample };

  static BlindPrior fit(std::span<const QARecord> train, Mode mode, std::uint64_t seed = 0) {
    BlindPrior p;
    p.mode_ = mode;
    p.seed_ = seed;
    for (const auto& r : train) {
      const auto a = normalize_answer(r.answer);
      p.tables_[key(r.category, r.vrs_type)][a]++;
      p.tables_[key(r.category, std::nullopt)][a]++;
      p.global_[a]++;
    }
    return p;
  }

  std::string answer(const QARecord& r) const {
    const std::map<std::string, std::size_t>* table = &global_;
    if (auto it = tables_.find(key(r.category, r.vrs_type)); it != tables_.end()) {
      table = &it->second;
    } else if (auto it2 = tables_.find(key(r.category, std::nullopt)); it2 != tables_.end()) {
      table = &it2->second;
    }
    if (table->empty()) return {};
    if (mode_ == Mode::Majority) {
      auto best = table->begin();
      for (auto it = table->begin(); it != table->end(); ++it)
        if (it->second > best->second) best = it;
      return best->first;
    }
    std::size_t total = 0;
    for (const auto& [a, n] : *table) total += n;
    const double u = static_cast<double>(mix64(seed_ ^ fnv1a(r.qid)) >> 11) * 0x1.0p-53;
    const double target = u * static_cast<double>(total);
    double acc = 0.0;
    for (const auto& [a, n] : *table) {
      acc += static_cast<double>(n);
      if (target < acc) return a;
    }
    return table->rbegin()->first;
  }

  Mode mode() const { return mode_; }

 private:
  static std::string key(Category c, std::optional<VrsType> t) {
    return std::string(to_string(c)) + "|" + (t ? std::string(to_string(*t)) : std::string("*"));
  }

  Mode mode_ = Mode::Sample;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::map<std::string, std::size_t>> tables_;
  std::map<std::string, std::size_t> global_;
};

inline BlindPrior::Mode parse_blind_mode(std::string_view s) {
  if (s == "majority") return BlindPrior::Mode::Majority;
  if (s == "sample") return BlindPrior::Mode::Sample;
  throw Error(ErrorCode::InvalidArgument, "unknown blind prior mode '" + std::string(s) + "'");
}

template <typename Answerer>
std::vector<PredictionRecord> run_mock(const Answerer& answerer, std::span<const QARecord> records,
                                       const std::string& model_id, PredictionVariant variant) {
  std::vector<PredictionRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.qid, model_id, variant, answerer.answer(r)});
  return out;
}

struct StatsCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct StatsReport {
  json merged;
  std::vector<StatsCheck> checks;
  bool all_ok() const {
    for (const auto& c : checks)
      if (!c.ok) return false;
    return true;
  }
};

namespace detail {
inline void require_keys(const json& j, const std::string& section, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (!j.is_object() || !j.contains(k))
      throw Error(ErrorCode::MissingSection, section + " report lacks '" + k + "'", {section});
}
}  // namespace detail

/// Merges component reports. Absent inputs leave their section null; a
/// present report without its required fields is MissingSection. Totals are
/// re-derived from the raw numbers in each section.
inline StatsReport build_stats(const std::optional<json>& filter, const std::optional<json>& score,
                               const std::optional<json>& vrs_report, const std::optional<json>& augment,
                               const std::optional<json>& reweight) {
  StatsReport out;
  out.merged = {{"filter", nullptr}, {"score", nullptr}, {"vrs", nullptr}, {"augment", nullptr}, {"reweight", nullptr}};
  if (filter) {
    detail::require_keys(*filter, "filter", {"original_count", "final_count", "stages", "removed_qids", "kept_qids"});
    out.merged["filter"] = *filter;
    std::int64_t remaining = filter->at("original_count").get<std::int64_t>();
    std::int64_t filtered = 0;
    bool chain_ok = true;
    for (const auto& st : filter->at("stages")) {
      filtered += st.at("filtered").get<std::int64_t>();
      chain_ok &= st.at("remaining").get<std::int64_t>() == remaining - filtered;
    }
    const auto orig = filter->at("original_count").get<std::int64_t>();
    const auto fin = filter->at("final_count").get<std::int64_t>();
    out.checks.push_back({"filter.stage_sums", chain_ok && orig - filtered == fin,
                          "original " + std::to_string(orig) + " - filtered " + std::to_string(filtered) + " vs final " +
                              std::to_string(fin)});
    const auto removed = filter->at("removed_qids").size();
    const auto kept = filter->at("kept_qids").size();
    out.checks.push_back({"filter.partition",
                          static_cast<std::int64_t>(removed + kept) == orig && static_cast<std::int64_t>(kept) == fin,
                          std::to_string(kept) + " kept + " + std::to_string(removed) + " removed"});
  }
  if (score) {
    detail::require_keys(*score, "score", {"overall", "per_category"});
    out.merged["score"] = *score;
    std::int64_t total = 0, correct = 0;
    for (const auto& [cat, t] : score->at("per_category").items()) {
      total += t.at("total").get<std::int64_t>();
      correct += t.at("correct").get<std::int64_t>();
    }
    const auto& o = score->at("overall");
    out.checks.push_back({"score.category_sums",
                          total == o.at("total").get<std::int64_t>() && correct == o.at("correct").get<std::int64_t>(),
                          std::to_string(correct) + "/" + std::to_string(total)});
  }
  if (vrs_report) {
    detail::require_keys(*vrs_report, "vrs", {"n_total", "n_k", "vrs"});
    out.merged["vrs"] = *vrs_report;
    const auto n = vrs_report->at("n_total").get<std::int64_t>();
    const auto nk = vrs_report->at("n_k").get<std::vector<std::int64_t>>();
    bool ok = nk.size() == 4 && (nk.empty() || nk[0] <= n);
    for (std::size_t k = 1; ok && k < nk.size(); ++k) ok = nk[k] <= nk[k - 1];
    std::int64_t sum = 0;
    for (auto v : nk) sum += v;
    const double recomputed = n > 0 ? static_cast<double>(percent_tenths(sum, 4 * n)) / 10.0 : 0.0;
    ok = ok && std::abs(recomputed - vrs_report->at("vrs").get<double>()) < 1e-9;
    out.checks.push_back({"vrs.recompute", ok, "vrs from N_k = " + std::to_string(recomputed)});
  }
  if (augment) {
    detail::require_keys(*augment, "augment", {"valid", "answer_corrected", "invalid", "variants"});
    out.merged["augment"] = *augment;
    const auto total = augment->at("valid").get<std::int64_t>() + augment->at("answer_corrected").get<std::int64_t>() +
                       augment->at("invalid").get<std::int64_t>();
    out.checks.push_back({"augment.counts", total == augment->at("variants").get<std::int64_t>(),
                          std::to_string(total) + " verdicts"});
  }
  if (reweight) {
    detail::require_keys(*reweight, "reweight", {"loss"});
    out.merged["reweight"] = *reweight;
  }
  json checks = json::array();
  for (const auto& c : out.checks) checks.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
  out.merged["checks"] = checks;
  return out;
}

}  // namespace sqaforge
