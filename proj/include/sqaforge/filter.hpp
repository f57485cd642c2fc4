#pragma once

// Removal of 3D-independent questions. A question is 3D-independent for a
// model when both its full and its blind run answer it correctly. The union
// over models is removed first; a text-only LLM pass then removes what it
// can still answer from the remainder.

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sqaforge/error.hpp"
#include "sqaforge/io.hpp"
#include "sqaforge/metrics.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

/// Predictions of one model under one conditioning, keyed by qid.
struct PredictionSet {
  std::string model_id;
  PredictionVariant variant = PredictionVariant::Full;
  std::map<std::string, std::string> answers;

  /// Builds a set from records that must share model and variant; a
  /// repeated qid is a hard error.
  static PredictionSet from_records(std::span<const PredictionRecord> recs) {
    PredictionSet s;
    if (recs.empty()) return s;
    s.model_id = recs.front().model_id;
    s.variant = recs.front().variant;
    for (const auto& r : recs) {
      if (r.model_id != s.model_id || r.variant != s.variant)
        throw Error(ErrorCode::InvariantViolation,
                    "prediction file mixes (" + s.model_id + ", " + std::string(to_string(s.variant)) +
                        ") with (" + r.model_id + ", " + std::string(to_string(r.variant)) + ")");
      if (!s.answers.emplace(r.qid, r.predicted_answer).second)
        throw Error(ErrorCode::DuplicatePrediction,
                    "duplicate prediction for (" + r.qid + ", " + r.model_id + ", " +
                        std::string(to_string(r.variant)) + ")",
                    {r.qid});
    }
    return s;
  }
};

inline bool correctness(const PredictionRecord& pred, const QARecord& gold, MatchPolicy matcher) {
  if (pred.qid != gold.qid)
    throw Error(ErrorCode::QidMismatch, "prediction '" + pred.qid + "' scored against '" + gold.qid + "'");
  return match(pred.predicted_answer, gold.answer, matcher);
}

namespace detail {
/// Throws CoverageMismatch unless `set` answers every qid in `required`
/// and nothing outside `known`.
inline void check_coverage(const PredictionSet& set, const std::set<std::string>& required,
                           const std::set<std::string>& known, const std::string& what) {
  std::vector<std::string> problems;
  for (const auto& q : required)
    if (!set.answers.contains(q)) problems.push_back("missing:" + q);
  for (const auto& [q, a] : set.answers)
    if (!known.contains(q)) problems.push_back("unknown:" + q);
  if (!problems.empty())
    throw Error(ErrorCode::CoverageMismatch,
                what + " does not match the gold question set (" + std::to_string(problems.size()) +
                    " problems)",
                std::move(problems));
}
}  // namespace detail

/// Questions both the full and the blind run of one model answer correctly.
inline std::set<std::string> independent_set(const PredictionSet& full, const PredictionSet& blind,
                                             std::span<const QARecord> gold, MatchPolicy matcher) {
  std::set<std::string> all;
  for (const auto& g : gold) all.insert(g.qid);
  detail::check_coverage(full, all, all, "full run of '" + full.model_id + "'");
  detail::check_coverage(blind, all, all, "blind run of '" + blind.model_id + "'");
  std::set<std::string> out;
  for (const auto& g : gold)
    if (match(full.answers.at(g.qid), g.answer, matcher) &&
        match(blind.answers.at(g.qid), g.answer, matcher))
      out.insert(g.qid);
  return out;
}

struct ModelRun {
  PredictionSet full;
  PredictionSet blind;
};

struct FilterReport {
  std::size_t original_count = 0;
  MatchPolicy matcher = MatchPolicy::EM_R;
  /// Per model, in run order: |Q_X| and how many of those were not
  /// already removed by an earlier run.
  std::vector<std::pair<std::string, std::size_t>> per_model_independent;
  std::vector<std::pair<std::string, std::size_t>> per_model_filtered;
  std::size_t model_union_count = 0;
  std::size_t after_models_count = 0;
  std::size_t gpt_filtered = 0;
  std::size_t final_count = 0;
  std::set<std::string> removed_qids;
  std::set<std::string> kept_qids;
  bool empty_benchmark = false;
};

struct FilterResult {
  FilterReport report;
  std::vector<QARecord> kept;
};

/// Model union first, then the LLM pass over what remains. `llm` must
/// answer every question that survives the model stage.
inline FilterResult build_benchmark(std::span<const QARecord> gold, std::span<const ModelRun> runs,
                                    const PredictionSet& llm, MatchPolicy matcher) {
  if (runs.empty()) throw Error(ErrorCode::InvalidArgument, "at least one model run is required");
  FilterResult result;
  auto& rep = result.report;
  rep.matcher = matcher;
  rep.original_count = gold.size();

  std::set<std::string> all;
  for (const auto& g : gold)
    if (!all.insert(g.qid).second)
      throw Error(ErrorCode::InvariantViolation, "duplicate gold qid '" + g.qid + "'", {g.qid});

  std::set<std::string> model_union;
  for (const auto& run : runs) {
    const auto qx = independent_set(run.full, run.blind, gold, matcher);
    std::size_t fresh = 0;
    for (const auto& q : qx) fresh += model_union.insert(q).second ? 1 : 0;
    rep.per_model_independent.emplace_back(run.full.model_id, qx.size());
    rep.per_model_filtered.emplace_back(run.full.model_id, fresh);
  }
  rep.model_union_count = model_union.size();
  rep.after_models_count = all.size() - model_union.size();

  std::set<std::string> remaining;
  std::set_difference(all.begin(), all.end(), model_union.begin(), model_union.end(),
                      std::inserter(remaining, remaining.end()));
  detail::check_coverage(llm, remaining, all, "llm predictions");

  std::set<std::string> gpt;
  for (const auto& g : gold)
    if (remaining.contains(g.qid) && match(llm.answers.at(g.qid), g.answer, matcher))
      gpt.insert(g.qid);
  rep.gpt_filtered = gpt.size();

  rep.removed_qids = model_union;
  rep.removed_qids.insert(gpt.begin(), gpt.end());
  for (const auto& g : gold) {
    if (rep.removed_qids.contains(g.qid)) continue;
    rep.kept_qids.insert(g.qid);
    result.kept.push_back(g);
  }
  rep.final_count = rep.kept_qids.size();
  rep.empty_benchmark = rep.final_count == 0;
  return result;
}

inline json to_json(const FilterReport& r) {
  json per_model = json::array();
  for (std::size_t i = 0; i < r.per_model_filtered.size(); ++i)
    per_model.push_back({{"model_id", r.per_model_filtered[i].first},
                         {"independent", r.per_model_independent[i].second},
                         {"filtered", r.per_model_filtered[i].second}});
  json stages = json::array();
  std::size_t remaining = r.original_count;
  stages.push_back({{"stage", "original"}, {"filtered", 0}, {"remaining", remaining}});
  for (const auto& [model, n] : r.per_model_filtered) {
    remaining -= n;
    stages.push_back({{"stage", "model:" + model}, {"filtered", n}, {"remaining", remaining}});
  }
  remaining -= r.gpt_filtered;
  stages.push_back({{"stage", "llm"}, {"filtered", r.gpt_filtered}, {"remaining", remaining}});
  return {{"cascade", "model union in run order, then text-only llm on the remainder"},
          {"matcher", std::string(to_string(r.matcher))},
          {"original_count", r.original_count},
          {"per_model", per_model},
          {"model_union_count", r.model_union_count},
          {"after_models_count", r.after_models_count},
          {"gpt_filtered", r.gpt_filtered},
          {"final_count", r.final_count},
          {"empty_benchmark", r.empty_benchmark},
          {"stages", stages},
          {"removed_qids", r.removed_qids},
          {"kept_qids", r.kept_qids}};
}

}  // namespace sqaforge
