#include "pinet/ffnet.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace pinet;

namespace {

FeaturePyramid pyramid(int base, int64_t size, uint64_t seed) {
  torch::manual_seed(seed);
  FeaturePyramid p;
  p.base_channels = base;
  for (int l = 1; l <= kPyramidLevels; ++l) {
    const int64_t s = size >> (l - 1);
    p.levels.emplace_back(torch::randn({1, static_cast<int64_t>(base) << (l - 1), s, s}), l);
  }
  return p;
}

}  // namespace

TEST(ScheduleFlows, EightStepsGive37Pairs) {
  auto s = schedule_flows(8, 16);
  EXPECT_EQ(s.pairs.size(), 37u);
  EXPECT_EQ(s.count(FlowTag::anchor), 8u);
  EXPECT_EQ(s.count(FlowTag::interframe), 28u);
  EXPECT_EQ(s.count(FlowTag::direction), 1u);
}

TEST(ScheduleFlows, OneStep) {
  auto s = schedule_flows(1, 5);
  ASSERT_EQ(s.pairs.size(), 2u);
  EXPECT_EQ(s.pairs[0], (FlowPair{1, 0, FlowTag::anchor}));
  EXPECT_EQ(s.pairs[1], (FlowPair{1, 5, FlowTag::direction}));
}

TEST(ScheduleFlows, BruteForceEnumerationMatchesClosedForm) {
  for (int m = 1; m <= 8; ++m) {
    const int n = m + 3;
    auto s = schedule_flows(m, n);
    std::set<std::pair<int, int>> expect;
    for (int i = 1; i <= m; ++i) {
      for (int j = 0; j < i; ++j) expect.insert({i, j});
    }
    expect.insert({m, n});
    std::set<std::pair<int, int>> got;
    for (const auto& p : s.pairs) got.insert({p.src, p.dst});
    EXPECT_EQ(got, expect);
    EXPECT_EQ(s.pairs.size(), static_cast<size_t>(m * (m + 1) / 2 + 1));
    EXPECT_EQ(got.size(), s.pairs.size()) << "duplicate pairs";
  }
}

TEST(ScheduleFlows, CoversEveryAttentionTerm) {
  const int m = 8;
  auto s = schedule_flows(m, 20);
  for (int i = 1; i <= m; ++i) {
    for (int j = 0; j < i; ++j) EXPECT_TRUE(s.contains(i, j)) << i << "->" << j;
  }
  EXPECT_EQ(s.index_of(m, 20), s.pairs.size() - 1);
  EXPECT_THROW(s.index_of(0, 1), std::out_of_range);
}

TEST(ScheduleFlows, RejectsGapNotAboveM) {
  EXPECT_THROW(schedule_flows(8, 8), RoutingError);
  EXPECT_THROW(schedule_flows(0, 4), std::invalid_argument);
}

TEST(FFNet, UntrainedFlowIsZeroEverywhere) {
  torch::NoGradGuard guard;
  FFNet net(EncoderConfig{4}, FlowNetConfig{2, {8, 8}});
  auto p = pyramid(4, 32, 1);
  auto flows = net->estimate_flow(p, p);
  ASSERT_EQ(flows.levels.size(), 5u);
  for (int l = 1; l <= 5; ++l) EXPECT_EQ(flows.level(l).tensor().abs().max().item<float>(), 0.0f);
}

TEST(FFNet, LevelShapesAt256) {
  torch::NoGradGuard guard;
  FFNet net(EncoderConfig{4}, FlowNetConfig{1, {4}});
  auto flows = net->estimate_flow(pyramid(4, 256, 2), pyramid(4, 256, 3));
  for (int l = 1; l <= 5; ++l) {
    const int64_t s = 256 >> (l - 1);
    EXPECT_EQ(flows.level(l).tensor().sizes(), (std::vector<int64_t>{1, 2, s, s}));
    EXPECT_EQ(flows.level(l).level(), l);
  }
  EXPECT_EQ(flows.finest().level(), 1);
}

TEST(FFNet, DefaultEstimatorWidths) {
  FlowNetConfig cfg;
  EXPECT_EQ(cfg.radius, 4);
  EXPECT_EQ(cfg.widths, (std::vector<int>{128, 128, 96, 64, 32}));
}

TEST(FFNet, GradientReachesBothPyramids) {
  torch::manual_seed(4);
  FFNet net(EncoderConfig{4}, FlowNetConfig{1, {8}});
  {
    torch::NoGradGuard guard;
    for (auto& p : net->parameters()) p.add_(0.05 * torch::randn_like(p));
  }
  auto a = pyramid(4, 32, 5), b = pyramid(4, 32, 6);
  for (auto& f : a.levels) f = FeatureMap(f.tensor().requires_grad_(), f.level());
  for (auto& f : b.levels) f = FeatureMap(f.tensor().requires_grad_(), f.level());
  net->estimate_flow(a, b).finest().tensor().sum().backward();
  EXPECT_GT(a.at(1).grad().abs().sum().item<double>(), 0.0);
  EXPECT_GT(b.at(1).grad().abs().sum().item<double>(), 0.0);
  EXPECT_GT(b.at(5).grad().abs().sum().item<double>(), 0.0);
}

TEST(FFNet, RejectsMismatchedPyramids) {
  FFNet net(EncoderConfig{4}, FlowNetConfig{1, {4}});
  EXPECT_THROW(net->estimate_flow(pyramid(4, 32, 1), pyramid(4, 64, 1)), ShapeError);
  EXPECT_THROW((FlowNetConfig{-1, {4}}.validate()), ConfigError);
  EXPECT_THROW((FlowNetConfig{1, {}}.validate()), ConfigError);
}
