#pragma once

// Desk-scale stand-in for a 3D-LLM: a linear softmax classifier over a small
// answer vocabulary. Inputs are text features, 3D features and a bias; the
// text-only conditioning zeroes the 3D features. Used to check gradients of
// the three fine-tuning objectives and to observe their effect on the
// conditional-independence gap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "sqaforge/error.hpp"
#include "sqaforge/reweight.hpp"

namespace sqaforge::toy {

struct Dataset {
  std::size_t text_dim = 0;
  std::size_t geo_dim = 0;
  std::size_t vocab = 0;
  /// Number of equally likely answers a text-only reader faces on a
  /// 3D-dependent item.
  std::size_t candidates = 0;
  std::vector<std::vector<double>> text;
  std::vector<std::vector<double>> geo;
  std::vector<int> answer;
  std::vector<bool> guessable;

  std::size_t size() const { return answer.size(); }
};

struct SyntheticSetup {
  std::size_t items = 600;
  double guessable_frac = 0.3;
  std::size_t guess_templates = 4;
  std::size_t dep_templates = 4;
  std::size_t candidates = 4;
  double noise = 0.1;
};

/// Guessable items: the text template fixes the answer and the 3D features
/// are an unrelated random slot. 3D-dependent items: the template narrows
/// the answer to `candidates` options and the 3D slot picks one.
inline Dataset make_synthetic(const SyntheticSetup& setup, std::uint64_t seed) {
  if (setup.guessable_frac < 0.0 || setup.guessable_frac > 1.0)
    throw Error(ErrorCode::InvalidArgument, "guessable_frac must lie in [0, 1]");
  Dataset d;
  d.text_dim = setup.guess_templates + setup.dep_templates;
  d.geo_dim = setup.candidates;
  d.vocab = setup.guess_templates + setup.dep_templates * setup.candidates;
  d.candidates = setup.candidates;
  if (d.vocab > 64 || d.text_dim + d.geo_dim > 16)
    throw Error(ErrorCode::InvalidArgument, "toy model is limited to 64 answers and 16 features");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, setup.noise);
  const auto n_guess = static_cast<std::size_t>(std::llround(setup.guessable_frac * static_cast<double>(setup.items)));
  std::vector<bool> flags(setup.items, false);
  std::fill(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(n_guess), true);
  std::shuffle(flags.begin(), flags.end(), rng);
  for (bool g : flags) {
    std::vector<double> t(d.text_dim), x(d.geo_dim);
    for (auto& v : t) v = noise(rng);
    for (auto& v : x) v = noise(rng);
    const auto slot = std::uniform_int_distribution<std::size_t>(0, setup.candidates - 1)(rng);
    x[slot] += 1.0;
    int y = 0;
    if (g) {
      const auto tmpl = std::uniform_int_distribution<std::size_t>(0, setup.guess_templates - 1)(rng);
      t[tmpl] += 1.0;
      y = static_cast<int>(tmpl);
    } else {
      const auto tmpl = std::uniform_int_distribution<std::size_t>(0, setup.dep_templates - 1)(rng);
      t[setup.guess_templates + tmpl] += 1.0;
      y = static_cast<int>(setup.guess_templates + tmpl * setup.candidates + slot);
    }
    d.text.push_back(std::move(t));
    d.geo.push_back(std::move(x));
    d.answer.push_back(y);
    d.guessable.push_back(g);
  }
  return d;
}

class Model {
 public:
  Model() = default;
  Model(std::size_t vocab, std::size_t text_dim, std::size_t geo_dim)
      : vocab_(vocab), text_dim_(text_dim), geo_dim_(geo_dim),
        params_(vocab * (text_dim + geo_dim + 1), 0.0) {}

  static Model random(std::size_t vocab, std::size_t text_dim, std::size_t geo_dim, std::uint64_t seed,
                      double scale = 0.01) {
    Model m(vocab, text_dim, geo_dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    for (auto& p : m.params_) p = dist(rng);
    return m;
  }

  std::size_t vocab() const { return vocab_; }
  std::size_t input_dim() const { return text_dim_ + geo_dim_ + 1; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  /// Features: text, then 3D (zeros when `with_3d` is false), then bias.
  std::vector<double> features(std::span<const double> text, std::span<const double> geo, bool with_3d) const {
    std::vector<double> x(input_dim(), 0.0);
    std::copy(text.begin(), text.end(), x.begin());
    if (with_3d) std::copy(geo.begin(), geo.end(), x.begin() + static_cast<std::ptrdiff_t>(text_dim_));
    x.back() = 1.0;
    return x;
  }

  /// Softmax over the vocabulary, computed with the max-shift.
  std::vector<double> probs(std::span<const double> x) const {
    std::vector<double> logits(vocab_, 0.0);
    const auto d = input_dim();
    for (std::size_t v = 0; v < vocab_; ++v) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += params_[v * d + k] * x[k];
      logits[v] = acc;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    for (auto& l : logits) l /= z;
    return logits;
  }

  double log_prob(const Dataset& data, std::size_t i, bool with_3d) const {
    const auto p = probs(features(data.text[i], data.geo[i], with_3d));
    return std::log(p[static_cast<std::size_t>(data.answer[i])]);
  }

  int predict(const Dataset& data, std::size_t i, bool with_3d) const {
    const auto p = probs(features(data.text[i], data.geo[i], with_3d));
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }

 private:
  std::size_t vocab_ = 0;
  std::size_t text_dim_ = 0;
  std::size_t geo_dim_ = 0;
  std::vector<double> params_;  // vocab x input_dim, row-major
};

enum class Objective { SFT, Blind, RFT };

inline std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::SFT: return "sft";
    case Objective::Blind: return "blind";
    case Objective::RFT: return "3dr-ft";
  }
  return "sft";
}

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Everything the objectives need besides the model and data.
struct ObjectiveContext {
  Objective objective = Objective::SFT;
  const Model* blind = nullptr;  // frozen blind model, required for RFT
  ReweightConfig cfg;
  /// When set, RFT uses these per-item weights instead of recomputing
  /// them. Lets finite differences see detached weights as constants.
  const std::vector<double>* fixed_weights = nullptr;
};

namespace detail {
inline void add_outer(std::vector<double>& grad, std::span<const double> coeff, std::span<const double> x,
                      double scale) {
  const auto d = x.size();
  for (std::size_t v = 0; v < coeff.size(); ++v) {
    const double c = coeff[v] * scale;
    if (c == 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) grad[v * d + k] += c * x[k];
  }
}
}  // namespace detail

/// Per-item RFT weights for the current parameters.
inline std::vector<double> rft_weights(const Model& m, const Dataset& data, std::span<const std::size_t> idx,
                                       const Model& blind, const ReweightConfig& cfg) {
  std::vector<double> w;
  w.reserve(idx.size());
  for (auto i : idx) {
    const auto lb = clamp_log_prob(blind.log_prob(data, i, false), cfg.prob_clamp_eps).value;
    const auto lt = clamp_log_prob(m.log_prob(data, i, false), cfg.prob_clamp_eps).value;
    w.push_back(surprise_weight(lb, lt, cfg).value);
  }
  return w;
}

/// Mean loss over `idx` and its gradient with respect to the parameters.
/// SFT: -log p(y | text, 3D). Blind: -log p(y | text). RFT: -w * log p(y |
/// text, 3D) with w = log p_blind(y | text) / log p(y | text); with
/// detach_weights the weight is a constant in the gradient.
inline LossGrad objective_loss(const Model& m, const Dataset& data, std::span<const std::size_t> idx,
                               const ObjectiveContext& ctx) {
  if (idx.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  if (ctx.objective == Objective::RFT && !ctx.blind)
    throw Error(ErrorCode::InvalidArgument, "3DR-FT needs a frozen blind model");
  LossGrad out;
  out.grad.assign(m.params().size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  std::vector<double> coeff(m.vocab());
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const auto i = idx[n];
    const auto y = static_cast<std::size_t>(data.answer[i]);
    const bool use_3d = ctx.objective != Objective::Blind;
    const auto x = m.features(data.text[i], data.geo[i], use_3d);
    const auto p = m.probs(x);
    const double lp = std::log(p[y]);
    double weight = 1.0;
    if (ctx.objective == Objective::RFT) {
      const auto xt = m.features(data.text[i], data.geo[i], false);
      const auto pt = m.probs(xt);
      const auto lb = clamp_log_prob(ctx.blind->log_prob(data, i, false), ctx.cfg.prob_clamp_eps);
      const auto lt = clamp_log_prob(std::log(pt[y]), ctx.cfg.prob_clamp_eps);
      const auto w = surprise_weight(lb.value, lt.value, ctx.cfg);
      weight = ctx.fixed_weights ? (*ctx.fixed_weights)[n] : w.value;
      if (!ctx.cfg.detach_weights && !ctx.fixed_weights && !w.capped && !lt.clamped) {
        // d(-w * lp)/dθ gains -lp * dw/dθ, dw = -(lb / lt^2) d(lt).
        const double scale = lp * lb.value / (lt.value * lt.value);
        for (std::size_t v = 0; v < coeff.size(); ++v) coeff[v] = (v == y ? 1.0 : 0.0) - pt[v];
        detail::add_outer(out.grad, coeff, xt, scale * inv_n);
      }
    }
    out.loss += -weight * lp * inv_n;
    for (std::size_t v = 0; v < coeff.size(); ++v) coeff[v] = p[v] - (v == y ? 1.0 : 0.0);
    detail::add_outer(out.grad, coeff, x, weight * inv_n);
  }
  return out;
}

inline double objective_value(const Model& m, const Dataset& data, std::span<const std::size_t> idx,
                              const ObjectiveContext& ctx) {
  return objective_loss(m, data, idx, ctx).loss;
}

struct GradCheck {
  double max_rel_error = 0.0;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
};

/// Central finite differences against the analytic gradient. Detached RFT
/// weights are frozen at the base point for both sides.
inline GradCheck finite_difference_check(const Model& m, const Dataset& data, std::span<const std::size_t> idx,
                                         ObjectiveContext ctx, double h = 1e-5) {
  std::vector<double> frozen;
  if (ctx.objective == Objective::RFT && ctx.cfg.detach_weights) {
    frozen = rft_weights(m, data, idx, *ctx.blind, ctx.cfg);
    ctx.fixed_weights = &frozen;
  }
  const auto analytic = objective_loss(m, data, idx, ctx).grad;
  Model probe = m;
  std::vector<double> numeric(analytic.size());
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double orig = probe.params()[k];
    probe.params()[k] = orig + h;
    const double up = objective_value(probe, data, idx, ctx);
    probe.params()[k] = orig - h;
    const double down = objective_value(probe, data, idx, ctx);
    probe.params()[k] = orig;
    numeric[k] = (up - down) / (2 * h);
  }
  GradCheck gc;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double d = analytic[k] - numeric[k];
    diff2 += d * d;
    a2 += analytic[k] * analytic[k];
    n2 += numeric[k] * numeric[k];
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-7});
    gc.max_rel_error = std::max(gc.max_rel_error, std::abs(d) / denom);
  }
  const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-300);
  gc.rel_error = std::sqrt(diff2) / denom;
  return gc;
}

struct EvalMetrics {
  double acc_guessable = 0.0;
  double acc_dependent = 0.0;
  double mean_delta_guessable = 0.0;
  double mean_delta_dependent = 0.0;
};

/// Accuracy uses the objective's own conditioning (`with_3d`); the gap
/// delta = p(y | text, 3D) / p(y | text) - 1 always compares both.
inline EvalMetrics evaluate(const Model& m, const Dataset& data, bool with_3d) {
  EvalMetrics e;
  std::size_t ng = 0, nd = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool ok = m.predict(data, i, with_3d) == data.answer[i];
    const double delta = independence_gap(m.log_prob(data, i, true), m.log_prob(data, i, false));
    if (data.guessable[i]) {
      ++ng;
      e.acc_guessable += ok ? 1.0 : 0.0;
      e.mean_delta_guessable += delta;
    } else {
      ++nd;
      e.acc_dependent += ok ? 1.0 : 0.0;
      e.mean_delta_dependent += delta;
    }
  }
  if (ng) e.acc_guessable /= static_cast<double>(ng), e.mean_delta_guessable /= static_cast<double>(ng);
  if (nd) e.acc_dependent /= static_cast<double>(nd), e.mean_delta_dependent /= static_cast<double>(nd);
  return e;
}

struct TraceEntry {
  std::size_t step = 0;
  double loss = 0.0;
  double mean_delta_dependent = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<TraceEntry> trace;
  EvalMetrics train;
  EvalMetrics eval;
};

struct TrainOptions {
  Objective objective = Objective::SFT;
  std::size_t steps = 1500;
  double lr = 1.0;
  std::uint64_t seed = 0;
  ReweightConfig cfg;
  std::size_t trace_every = 100;
};

/// Full-batch gradient descent from a seeded random start. RFT needs the
/// frozen blind model; the other objectives ignore it.
inline TrainResult toy_train(const Dataset& train, const Dataset& eval, const TrainOptions& opt,
                             const Model* blind = nullptr) {
  opt.cfg.validate();
  TrainResult r;
  r.model = Model::random(train.vocab, train.text_dim, train.geo_dim, opt.seed);
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  ObjectiveContext ctx{opt.objective, blind, opt.cfg, nullptr};
  for (std::size_t step = 0; step <= opt.steps; ++step) {
    const auto lg = objective_loss(r.model, train, idx, ctx);
    if (!std::isfinite(lg.loss))
      throw Error(ErrorCode::DivergenceDetected, "loss is not finite at step " + std::to_string(step));
    if (opt.trace_every && (step % opt.trace_every == 0 || step == opt.steps))
      r.trace.push_back({step, lg.loss, evaluate(r.model, eval, true).mean_delta_dependent});
    if (step == opt.steps) break;
    auto& p = r.model.params();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= opt.lr * lg.grad[k];
  }
  const bool with_3d = opt.objective != Objective::Blind;
  r.train = evaluate(r.model, train, with_3d);
  r.eval = evaluate(r.model, eval, with_3d);
  return r;
}

struct DemoSeed {
  std::uint64_t seed = 0;
  EvalMetrics blind;
  EvalMetrics sft;
  EvalMetrics rft;
};

/// Trains the blind, SFT and 3DR-FT models on one synthetic split per seed
/// and evaluates them on a held-out split.
inline std::vector<DemoSeed> rft_demo(const SyntheticSetup& setup, std::size_t seeds, std::size_t steps,
                                      const ReweightConfig& cfg, std::uint64_t base_seed = 0) {
  std::vector<DemoSeed> out;
  for (std::uint64_t s = base_seed; s < base_seed + seeds; ++s) {
    const auto train = make_synthetic(setup, 1000 + s);
    auto eval_setup = setup;
    eval_setup.items = std::max<std::size_t>(setup.items, 1000);
    const auto eval = make_synthetic(eval_setup, 2000 + s);
    TrainOptions opt;
    opt.seed = s;
    opt.steps = steps;
    opt.cfg = cfg;
    opt.trace_every = 0;
    DemoSeed d;
    d.seed = s;
    opt.objective = Objective::Blind;
    const auto blind = toy_train(train, eval, opt);
    d.blind = blind.eval;
    opt.objective = Objective::SFT;
    d.sft = toy_train(train, eval, opt).eval;
    opt.objective = Objective::RFT;
    d.rft = toy_train(train, eval, opt, &blind.model).eval;
    out.push_back(d);
  }
  return out;
}

}  // namespace sqaforge::toy
