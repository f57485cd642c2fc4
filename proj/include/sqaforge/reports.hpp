#pragma once

// JSON forms of the metric reports.

#include <string>

#include "sqaforge/augment.hpp"
#include "sqaforge/io.hpp"
#include "sqaforge/metrics.hpp"

namespace sqaforge {

inline json to_json(const Tally& t) {
  return {{"total", t.total}, {"correct", t.correct}, {"percent", t.percent_rounded()}};
}

inline json to_json(const AccuracyReport& r, MatchPolicy policy) {
  json per = json::object();
  for (const auto& [c, t] : r.per_category)
    if (t.total > 0) per[std::string(to_string(c))] = to_json(t);
  return {{"matcher", std::string(to_string(policy))}, {"overall", to_json(r.overall)}, {"per_category", per}};
}

inline json to_json(const VRSResult& r, MatchPolicy policy) {
  json pk = json::array();
  for (int k = 0; k < 4; ++k) pk.push_back(r.p_k_rounded(k));
  json per = json::object();
  for (const auto& [t, tally] : r.per_type) per[std::string(to_string(t))] = to_json(tally);
  return {{"matcher", std::string(to_string(policy))},
          {"n_total", r.n_total},
          {"n_k", r.n_k},
          {"p_k", pk},
          {"vrs", r.vrs_rounded()},
          {"per_type", per}};
}

inline json to_json(const VariantCounts& c, std::size_t seeds) {
  return {{"seeds", seeds},
          {"variants", c.valid + c.answer_corrected + c.invalid},
          {"valid", c.valid},
          {"answer_corrected", c.answer_corrected},
          {"invalid", c.invalid},
          {"needs_review", c.needs_review}};
}

}  // namespace sqaforge
