#pragma once

// Answer matching, accuracy tables, the Viewpoint Rotation Score, rater
// agreement and the 3D-token attention dependency score.

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sqaforge/error.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

enum class MatchPolicy { EM, EM_R };

inline std::string_view to_string(MatchPolicy p) {
  return p == MatchPolicy::EM ? "em" : "em_r";
}

inline MatchPolicy parse_match_policy(std::string_view s) {
  if (s == "em") return MatchPolicy::EM;
  if (s == "em_r") return MatchPolicy::EM_R;
  throw Error(ErrorCode::InvalidArgument, "unknown matcher '" + std::string(s) + "'");
}

inline std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Normalized answer tokens: lowercase, hyphen and slash split words, other
/// punctuation is deleted, the articles a/an/the are dropped.
inline std::vector<std::string> normalized_tokens(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == '-' || c == '/') {
      cleaned.push_back(' ');
    } else if (std::ispunct(c)) {
      continue;
    } else {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  std::vector<std::string> tokens;
  for (auto& tok : split_tokens(cleaned))
    if (tok != "a" && tok != "an" && tok != "the") tokens.push_back(std::move(tok));
  return tokens;
}

inline std::string normalize_answer(std::string_view text) {
  std::string out;
  for (const auto& tok : normalized_tokens(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

namespace detail {
inline bool contains_token_run(const std::vector<std::string>& hay,
                               const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size() && ok; ++j)
      ok = hay[i + j] == needle[j];
    if (ok) return true;
  }
  return false;
}
}  // namespace detail

/// EM compares normalized strings. EM_R also credits one normalized answer
/// appearing inside the other as a whole-token run.
inline bool match(std::string_view pred, std::string_view gold,
                  MatchPolicy policy) {
  const auto p = normalized_tokens(pred);
  const auto g = normalized_tokens(gold);
  if (p == g) return true;
  if (policy == MatchPolicy::EM) return false;
  return detail::contains_token_run(p, g) || detail::contains_token_run(g, p);
}

/// Percentages in reports carry one decimal, rounded half up. Exact for
/// integer ratios: returns tenths of a percent of num/den.
inline std::int64_t percent_tenths(std::int64_t num, std::int64_t den) {
  if (den <= 0) return 0;
  return (2000 * num + den) / (2 * den);
}

/// Half-up rounding to one decimal for values that are not integer ratios.
/// The small nudge absorbs representation error such as 14.2499999.
inline double round_half_up_1(double value) {
  const double scaled = value * 10.0;
  return std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, std::abs(scaled))) / 10.0;
}

struct Tally {
  std::size_t total = 0;
  std::size_t correct = 0;
  double percent() const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  }
  double percent_rounded() const {
    return static_cast<double>(percent_tenths(static_cast<std::int64_t>(correct),
                                              static_cast<std::int64_t>(total))) / 10.0;
  }
};

/// Predicted answers keyed by qid. A qid may appear only once.
inline std::unordered_map<std::string, std::string> index_predictions(
    std::span<const PredictionRecord> preds) {
  std::unordered_map<std::string, std::string> out;
  for (const auto& p : preds)
    if (!out.emplace(p.qid, p.predicted_answer).second)
      throw Error(ErrorCode::DuplicatePrediction, "duplicate prediction for qid '" + p.qid + "'",
                  {p.qid});
  return out;
}

namespace detail {
inline std::vector<std::string> missing_qids(
    std::span<const QARecord> gold,
    const std::unordered_map<std::string, std::string>& preds) {
  std::vector<std::string> missing;
  for (const auto& g : gold)
    if (!preds.contains(g.qid)) missing.push_back(g.qid);
  return missing;
}
}  // namespace detail

struct AccuracyReport {
  Tally overall;
  std::map<Category, Tally> per_category;
};

inline AccuracyReport score_accuracy(std::span<const PredictionRecord> preds,
                                     std::span<const QARecord> gold,
                                     MatchPolicy policy) {
  const auto index = index_predictions(preds);
  if (auto missing = detail::missing_qids(gold, index); !missing.empty())
    throw Error(ErrorCode::CoverageMismatch,
                std::to_string(missing.size()) + " gold questions lack predictions",
                std::move(missing));
  AccuracyReport report;
  for (auto c : kCategories) report.per_category[c];
  for (const auto& g : gold) {
    const bool ok = match(index.at(g.qid), g.answer, policy);
    report.overall.total++;
    report.per_category[g.category].total++;
    if (ok) {
      report.overall.correct++;
      report.per_category[g.category].correct++;
    }
  }
  return report;
}

struct VRSResult {
  std::size_t n_total = 0;
  std::array<std::size_t, 4> n_k{};  // groups with at least k+1 correct
  std::array<double, 4> p_k{};
  double vrs = 0.0;
  /// VRS in tenths of a percent, rounded half up from the exact ratio.
  std::int64_t vrs_tenths = 0;
  std::map<VrsType, Tally> per_type;

  double vrs_rounded() const { return static_cast<double>(vrs_tenths) / 10.0; }
  double p_k_rounded(int k) const {
    return static_cast<double>(percent_tenths(static_cast<std::int64_t>(n_k[k]),
                                              static_cast<std::int64_t>(n_total))) / 10.0;
  }
};

/// VRS from per-group correct counts, each in [0, 4].
inline VRSResult vrs_from_counts(std::span<const int> group_correct) {
  VRSResult r;
  r.n_total = group_correct.size();
  for (int c : group_correct) {
    if (c < 0 || c > 4)
      throw Error(ErrorCode::MalformedGroup, "group correct count out of range");
    for (int k = 0; k < c; ++k) r.n_k[k]++;
  }
  if (r.n_total == 0) return r;
  std::int64_t sum = 0;
  for (int k = 0; k < 4; ++k) {
    r.p_k[k] = 100.0 * static_cast<double>(r.n_k[k]) / static_cast<double>(r.n_total);
    sum += static_cast<std::int64_t>(r.n_k[k]);
  }
  r.vrs = (r.p_k[0] + r.p_k[1] + r.p_k[2] + r.p_k[3]) / 4.0;
  r.vrs_tenths = percent_tenths(sum, 4 * static_cast<std::int64_t>(r.n_total));
  return r;
}

/// Groups gold records by group_id; each group must hold exactly one record
/// per rotation in {0, 90, 180, 270}. Groups are ordered by group_id.
inline std::map<std::string, std::array<const QARecord*, 4>> rotation_groups(
    std::span<const QARecord> gold) {
  std::map<std::string, std::array<const QARecord*, 4>> groups;
  for (const auto& g : gold) {
    if (!is_valid_rotation(g.rotation_deg))
      throw Error(ErrorCode::MalformedGroup,
                  "record '" + g.qid + "' has rotation " + std::to_string(g.rotation_deg), {g.group_id});
    auto& slots = groups[g.group_id];
    auto& slot = slots[static_cast<std::size_t>(g.rotation_deg / 90)];
    if (slot)
      throw Error(ErrorCode::MalformedGroup,
                  "group '" + g.group_id + "' repeats rotation " + std::to_string(g.rotation_deg),
                  {g.group_id});
    slot = &g;
  }
  for (const auto& [id, slots] : groups)
    for (const auto* s : slots)
      if (!s)
        throw Error(ErrorCode::MalformedGroup, "group '" + id + "' does not have four rotations",
                    {id});
  return groups;
}

inline VRSResult vrs(std::span<const PredictionRecord> preds,
                     std::span<const QARecord> gold, MatchPolicy policy) {
  const auto groups = rotation_groups(gold);
  const auto index = index_predictions(preds);
  if (auto missing = detail::missing_qids(gold, index); !missing.empty())
    throw Error(ErrorCode::CoverageMismatch,
                std::to_string(missing.size()) + " gold questions lack predictions",
                std::move(missing));
  std::vector<int> counts;
  counts.reserve(groups.size());
  std::map<VrsType, Tally> per_type;
  for (const auto& [id, slots] : groups) {
    int c = 0;
    for (const auto* rec : slots) {
      const bool ok = match(index.at(rec->qid), rec->answer, policy);
      c += ok ? 1 : 0;
      if (rec->vrs_type) {
        auto& t = per_type[*rec->vrs_type];
        t.total++;
        if (ok) t.correct++;
      }
    }
    counts.push_back(c);
  }
  auto result = vrs_from_counts(counts);
  result.per_type = std::move(per_type);
  return result;
}

struct AgreementResult {
  double observed_agreement = 0.0;
  double expected_agreement = 0.0;
  double kappa = 0.0;
  /// True when both raters used a single shared label, so chance agreement
  /// is 1 and kappa falls back to 1 (all agree) or 0.
  bool degenerate = false;
  std::size_t n = 0;
};

inline AgreementResult cohens_kappa(std::span<const std::string> a,
                                    std::span<const std::string> b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::LengthMismatch,
                "label sequences must be non-empty and equally long (" +
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  std::map<std::string, std::size_t> ca, cb;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]]++;
    cb[b[i]]++;
    if (a[i] == b[i]) ++agree;
  }
  const double n = static_cast<double>(a.size());
  AgreementResult r;
  r.n = a.size();
  r.observed_agreement = static_cast<double>(agree) / n;
  double pe = 0.0;
  for (const auto& [label, count] : ca) {
    auto it = cb.find(label);
    if (it != cb.end())
      pe += (static_cast<double>(count) / n) * (static_cast<double>(it->second) / n);
  }
  r.expected_agreement = pe;
  if (ca.size() == 1 && cb.size() == 1 && ca.begin()->first == cb.begin()->first) {
    r.degenerate = true;
    r.expected_agreement = 1.0;
    r.kappa = r.observed_agreement == 1.0 ? 1.0 : 0.0;
    return r;
  }
  r.kappa = (r.observed_agreement - pe) / (1.0 - pe);
  return r;
}

/// Row-major attention weights of one head: rows are queries, columns keys.
struct AttentionMap {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<double> weights;

  double at(std::size_t q, std::size_t k) const { return weights[q * keys + k]; }
};

/// Half-open token index range.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end > begin ? end - begin : 0; }
};

/// Mean, over layers, heads and answer-token query rows, of the attention
/// mass that lands on the 3D-token key span.
inline double attention_dependency(
    const std::vector<std::vector<AttentionMap>>& layers, TokenSpan span_3d,
    TokenSpan span_answer, double row_tolerance = 1e-5) {
  if (layers.empty() || layers.front().empty())
    throw Error(ErrorCode::ShapeMismatch, "no attention maps");
  const std::size_t nq = layers.front().front().queries;
  const std::size_t nk = layers.front().front().keys;
  if (span_3d.size() == 0 || span_answer.size() == 0 || span_3d.end > nk ||
      span_answer.end > nq)
    throw Error(ErrorCode::ShapeMismatch, "token span outside attention map");
  double total = 0.0;
  std::size_t rows = 0;
  for (const auto& heads : layers) {
    if (heads.size() != layers.front().size())
      throw Error(ErrorCode::ShapeMismatch, "layers have different head counts");
    for (const auto& map : heads) {
      if (map.queries != nq || map.keys != nk || map.weights.size() != nq * nk)
        throw Error(ErrorCode::ShapeMismatch, "attention maps differ in shape");
      for (std::size_t q = 0; q < nq; ++q) {
        double row_sum = 0.0;
        for (std::size_t k = 0; k < nk; ++k) {
          const double w = map.at(q, k);
          if (!(w >= 0.0))
            throw Error(ErrorCode::NonStochasticRow, "negative or NaN attention weight");
          row_sum += w;
        }
        if (std::abs(row_sum - 1.0) > row_tolerance)
          throw Error(ErrorCode::NonStochasticRow,
                      "attention row " + std::to_string(q) + " sums to " + std::to_string(row_sum));
      }
      for (std::size_t q = span_answer.begin; q < span_answer.end; ++q) {
        double mass = 0.0;
        for (std::size_t k = span_3d.begin; k < span_3d.end; ++k) mass += map.at(q, k);
        total += mass;
        ++rows;
      }
    }
  }
  return total / static_cast<double>(rows);
}

}  // namespace sqaforge
