#include <gtest/gtest.h>

#include <numeric>

#include "sqaforge/toy_model.hpp"

namespace sq = sqaforge;
namespace toy = sqaforge::toy;

namespace {

std::vector<std::size_t> first(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

TEST(ToyData, ShapesAndGuessableShare) {
  toy::SyntheticSetup setup;
  setup.items = 1000;
  const auto d = toy::make_synthetic(setup, 3);
  EXPECT_EQ(d.size(), 1000u);
  EXPECT_EQ(d.vocab, 4u + 4u * 4u);
  EXPECT_EQ(std::count(d.guessable.begin(), d.guessable.end(), true), 300);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.text[i].size(), d.text_dim);
    EXPECT_EQ(d.geo[i].size(), d.geo_dim);
    EXPECT_LT(static_cast<std::size_t>(d.answer[i]), d.vocab);
    if (d.guessable[i]) {
      EXPECT_LT(d.answer[i], 4);
    }
  }
  const auto again = toy::make_synthetic(setup, 3);
  EXPECT_EQ(again.answer, d.answer);
}

TEST(ToyData, RejectsBadFraction) {
  toy::SyntheticSetup setup;
  setup.guessable_frac = 1.5;
  EXPECT_THROW(toy::make_synthetic(setup, 0), sq::Error);
}

TEST(ToyModel, TextOnlyIgnoresGeometry) {
  const auto d = toy::make_synthetic({}, 1);
  const auto m = toy::Model::random(d.vocab, d.text_dim, d.geo_dim, 2, 0.5);
  auto geo = d.geo[0];
  for (auto& g : geo) g += 3.0;
  EXPECT_EQ(m.features(d.text[0], d.geo[0], false), m.features(d.text[0], geo, false));
  EXPECT_NE(m.features(d.text[0], d.geo[0], true), m.features(d.text[0], geo, true));
  const auto p = m.probs(m.features(d.text[0], d.geo[0], true));
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
}

class GradCheckTest : public ::testing::TestWithParam<toy::Objective> {};

TEST_P(GradCheckTest, AnalyticMatchesFiniteDifferences) {
  toy::SyntheticSetup setup;
  setup.items = 30;
  const auto d = toy::make_synthetic(setup, 5);
  const auto blind = toy::Model::random(d.vocab, d.text_dim, d.geo_dim, 77, 0.8);
  const auto idx = first(d.size());
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto m = toy::Model::random(d.vocab, d.text_dim, d.geo_dim, s, 0.8);
    toy::ObjectiveContext ctx{GetParam(), &blind, {}, nullptr};
    EXPECT_LT(toy::finite_difference_check(m, d, idx, ctx).rel_error, 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(Objectives, GradCheckTest,
                         ::testing::Values(toy::Objective::SFT, toy::Objective::Blind, toy::Objective::RFT),
                         [](const auto& info) { return std::string(info.param == toy::Objective::RFT ? "rft"
                                                                    : info.param == toy::Objective::SFT ? "sft"
                                                                                                        : "blind"); });

TEST(ToyModel, AttachedWeightGradientIsExactWhenUncapped) {
  toy::SyntheticSetup setup;
  setup.items = 30;
  const auto d = toy::make_synthetic(setup, 8);
  const auto blind = toy::Model::random(d.vocab, d.text_dim, d.geo_dim, 70, 0.8);
  auto cfg = sq::ReweightConfig::uncapped();
  cfg.detach_weights = false;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto m = toy::Model::random(d.vocab, d.text_dim, d.geo_dim, 10 + s, 0.8);
    toy::ObjectiveContext ctx{toy::Objective::RFT, &blind, cfg, nullptr};
    EXPECT_LT(toy::finite_difference_check(m, d, first(d.size()), ctx).rel_error, 1e-6);
  }
}

TEST(ToyModel, RftNeedsBlindModel) {
  const auto d = toy::make_synthetic({}, 1);
  const auto m = toy::Model::random(d.vocab, d.text_dim, d.geo_dim, 0);
  toy::ObjectiveContext ctx{toy::Objective::RFT, nullptr, {}, nullptr};
  EXPECT_THROW(toy::objective_loss(m, d, first(5), ctx), sq::Error);
}

TEST(ToyModel, TrainingLowersLoss) {
  const auto d = toy::make_synthetic({}, 4);
  toy::TrainOptions opt;
  opt.steps = 200;
  opt.trace_every = 50;
  const auto r = toy::toy_train(d, d, opt);
  ASSERT_GE(r.trace.size(), 2u);
  EXPECT_LT(r.trace.back().loss, r.trace.front().loss);
  EXPECT_GT(r.train.acc_dependent, 0.5);
}

TEST(ToyModel, DivergenceIsDetected) {
  const auto d = toy::make_synthetic({}, 4);
  toy::TrainOptions opt;
  opt.steps = 50;
  opt.lr = 1e308;
  EXPECT_THROW(toy::toy_train(d, d, opt), sq::Error);
}
