#pragma once

// 3D-reweighted fine-tuning objective on precomputed token log-probabilities.
//
// For ground-truth token j:
//   lp_blind = log p_blind(y_j | y_<j, text)        frozen blind model
//   lp_text  = log p(y_j | y_<j, text)              current model, no 3D
//   lp_full  = log p(y_j | y_<j, text, 3D)          current model
//   w_j      = lp_blind / lp_text                   surprise ratio
//   loss     = mean over sequences of -sum_j w_j * lp_full
//   delta_j  = p_full / p_text - 1                  conditional-independence gap
//
// Uncapped, w_j * lp_text = lp_blind exactly, so
//   loss = mean(-sum lp_blind) + mean(-sum w_j * log(1 + delta_j)).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sqaforge/error.hpp"
#include "sqaforge/io.hpp"

namespace sqaforge {

struct TokenLogProbs {
  std::string qid;
  std::vector<int> tokens;
  std::vector<double> lp_blind;
  std::vector<double> lp_text;
  std::vector<double> lp_full;

  std::size_t size() const { return tokens.size(); }

  void validate() const {
    const auto t = tokens.size();
    if (lp_blind.size() != t || lp_text.size() != t || lp_full.size() != t)
      throw Error(ErrorCode::LengthMismatch, "log-prob arrays of '" + qid + "' differ in length");
    for (const auto* v : {&lp_blind, &lp_text, &lp_full})
      for (double x : *v)
        if (std::isnan(x) || x > 0.0)
          throw Error(ErrorCode::InvariantViolation, "log-prob of '" + qid + "' is NaN or positive");
  }
};

struct ReweightConfig {
  double prob_clamp_eps = 1e-6;
  double w_min = 0.1;
  double w_max = 10.0;
  bool detach_weights = true;

  void validate() const {
    if (!(prob_clamp_eps > 0.0 && prob_clamp_eps < 0.5))
      throw Error(ErrorCode::InvalidArgument, "prob_clamp_eps must lie in (0, 0.5)");
    if (!(w_min > 0.0 && w_min <= 1.0 && 1.0 <= w_max))
      throw Error(ErrorCode::InvalidArgument, "weight cap must satisfy 0 < w_min <= 1 <= w_max");
  }

  /// Caps and clamps wide enough that the decomposition identity is exact.
  static ReweightConfig uncapped() {
    ReweightConfig c;
    c.prob_clamp_eps = 1e-300;
    c.w_min = std::numeric_limits<double>::min();
    c.w_max = std::numeric_limits<double>::infinity();
    return c;
  }

  /// Every weight is 1, which reduces the objective to cross-entropy.
  static ReweightConfig unit_weights() {
    ReweightConfig c;
    c.w_min = 1.0;
    c.w_max = 1.0;
    return c;
  }
};

struct ClampedLogProb {
  double value = 0.0;
  bool clamped = false;
};

/// Clamps a log-probability so that the probability lies in [eps, 1 - eps].
inline ClampedLogProb clamp_log_prob(double lp, double eps) {
  const double lo = std::log(eps);
  const double hi = std::log1p(-eps);
  if (lp < lo) return {lo, true};
  if (lp > hi) return {hi, true};
  return {lp, false};
}

struct Weight {
  double value = 1.0;
  double raw = 1.0;
  bool capped = false;
};

/// Surprise ratio of already clamped log-probabilities, clipped to the cap.
inline Weight surprise_weight(double lp_blind, double lp_text, const ReweightConfig& cfg) {
  Weight w;
  w.raw = lp_blind / lp_text;
  w.value = std::clamp(w.raw, cfg.w_min, cfg.w_max);
  w.capped = w.value != w.raw;
  return w;
}

inline double independence_gap(double lp_full, double lp_text) {
  return std::expm1(lp_full - lp_text);
}

struct RftLoss {
  double loss = 0.0;
  std::vector<double> per_sequence;
  std::vector<std::vector<double>> weights;
  std::size_t clamped_entries = 0;
  std::size_t capped_weights = 0;
};

namespace detail {
struct ClampedSeq {
  std::vector<double> blind, text, full;
  std::size_t clamped = 0;
};

inline ClampedSeq clamp_seq(const TokenLogProbs& s, double eps) {
  s.validate();
  ClampedSeq c;
  auto run = [&](const std::vector<double>& in, std::vector<double>& out) {
    out.reserve(in.size());
    for (double x : in) {
      auto r = clamp_log_prob(x, eps);
      out.push_back(r.value);
      c.clamped += r.clamped ? 1 : 0;
    }
  };
  run(s.lp_blind, c.blind);
  run(s.lp_text, c.text);
  run(s.lp_full, c.full);
  return c;
}
}  // namespace detail

inline RftLoss rft_loss(std::span<const TokenLogProbs> batch, const ReweightConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  RftLoss out;
  double total = 0.0;
  for (const auto& seq : batch) {
    const auto c = detail::clamp_seq(seq, cfg.prob_clamp_eps);
    out.clamped_entries += c.clamped;
    std::vector<double> ws;
    ws.reserve(seq.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < seq.size(); ++j) {
      const auto w = surprise_weight(c.blind[j], c.text[j], cfg);
      out.capped_weights += w.capped ? 1 : 0;
      ws.push_back(w.value);
      acc += w.value * c.full[j];
    }
    const double seq_loss = -acc;
    out.per_sequence.push_back(seq_loss);
    out.weights.push_back(std::move(ws));
    total += seq_loss;
  }
  out.loss = total / static_cast<double>(batch.size());
  return out;
}

/// Plain token cross-entropy of the full-context predictions: mean over
/// sequences of -sum_j lp_full.
inline double cross_entropy(std::span<const TokenLogProbs> batch) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  double total = 0.0;
  for (const auto& seq : batch) {
    seq.validate();
    double acc = 0.0;
    for (double lp : seq.lp_full) acc += lp;
    total += -acc;
  }
  return total / static_cast<double>(batch.size());
}

struct Decomposition {
  double lhs = 0.0;
  double term_blind = 0.0;
  double term_gap = 0.0;
  double residual = 0.0;
  std::vector<double> per_sequence_residual;
};

/// Splits the loss into the blind-model term, which does not depend on the
/// trained model, and the weighted gap term. Throws CapFired when clamping
/// or capping changed any value, since the identity then no longer holds.
inline Decomposition decomposition_check(std::span<const TokenLogProbs> batch, const ReweightConfig& cfg) {
  const auto loss = rft_loss(batch, cfg);
  if (loss.clamped_entries > 0 || loss.capped_weights > 0)
    throw Error(ErrorCode::CapFired,
                std::to_string(loss.clamped_entries) + " clamped log-probs and " +
                    std::to_string(loss.capped_weights) + " capped weights");
  Decomposition d;
  d.lhs = loss.loss;
  double blind_total = 0.0;
  double gap_total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& seq = batch[i];
    double blind = 0.0;
    double gap = 0.0;
    for (std::size_t j = 0; j < seq.size(); ++j) {
      blind += seq.lp_blind[j];
      gap += loss.weights[i][j] * std::log1p(independence_gap(seq.lp_full[j], seq.lp_text[j]));
    }
    blind_total += -blind;
    gap_total += -gap;
    d.per_sequence_residual.push_back(loss.per_sequence[i] - (-blind) - (-gap));
  }
  const auto n = static_cast<double>(batch.size());
  d.term_blind = blind_total / n;
  d.term_gap = gap_total / n;
  d.residual = d.lhs - d.term_blind - d.term_gap;
  return d;
}

inline TokenLogProbs logprobs_from_json(const json& j) {
  TokenLogProbs t;
  t.qid = detail::field<std::string>(j, "qid");
  t.tokens = detail::field<std::vector<int>>(j, "tokens");
  t.lp_blind = detail::field<std::vector<double>>(j, "lp_blind");
  t.lp_text = detail::field<std::vector<double>>(j, "lp_text");
  t.lp_full = detail::field<std::vector<double>>(j, "lp_full");
  t.validate();
  return t;
}

inline json to_json(const TokenLogProbs& t) {
  return {{"qid", t.qid}, {"tokens", t.tokens}, {"lp_blind", t.lp_blind},
          {"lp_text", t.lp_text}, {"lp_full", t.lp_full}};
}

}  // namespace sqaforge
