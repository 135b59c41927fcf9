#include "pinet/pnet.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace pinet;

namespace {

PNetConfig tiny(int m = 8) {
  PNetConfig c;
  c.encoder.base_channels = 4;
  c.propagation.m = m;
  c.flow = FlowNetConfig{1, {4}};
  return c;
}

}  // namespace

TEST(PNet, EightFramesAndThirtySevenFlows) {
  torch::NoGradGuard guard;
  PNet net(tiny());
  Frame a(torch::rand({3, 32, 32})), b(torch::rand({3, 32, 32}));
  auto r = net->propagate(a, b, 16);
  EXPECT_EQ(r.flow_count(), 37u);
  EXPECT_EQ(r.m(), 8);
  ASSERT_TRUE(r.has_frames());
  for (int i = 1; i <= 8; ++i) {
    auto f = r.frame(i);
    ASSERT_EQ(f.levels.size(), 5u);
    EXPECT_EQ(f.finest().sizes(), (std::vector<int64_t>{1, 3, 32, 32}));
  }
  for (const auto& p : r.schedule.pairs) {
    auto fp = r.flow(p.src, p.dst);
    EXPECT_EQ(fp.levels.size(), 5u);
    EXPECT_EQ(fp.level(3).tensor().sizes(), (std::vector<int64_t>{1, 2, 8, 8}));
  }
  EXPECT_THROW(r.frame(9), std::out_of_range);
}

TEST(PNet, FlowsMatchTheScheduleExactly) {
  torch::NoGradGuard guard;
  for (int m : {1, 3}) {
    PNet net(tiny(m));
    auto r = net->forward(torch::rand({2, 3, 32, 32}), torch::rand({2, 3, 32, 32}), 10, Direction::forward);
    EXPECT_EQ(r.schedule.pairs, schedule_flows(m, 10).pairs);
    EXPECT_EQ(r.pair_flows[0].size(0), static_cast<int64_t>(m * (m + 1) / 2 + 1));
    EXPECT_EQ(r.pair_flows[0].size(1), 2);
  }
}

TEST(PNet, DirectionsAndTimestamps) {
  torch::NoGradGuard guard;
  PNet net(tiny());
  Frame a(torch::rand({3, 32, 32})), b(torch::rand({3, 32, 32}));
  auto fwd = net->propagate(a, b, 12, Direction::forward);
  auto bwd = net->propagate(b, a, 12, Direction::backward);
  EXPECT_EQ(fwd.direction, Direction::forward);
  EXPECT_EQ(bwd.direction, Direction::backward);
  for (int i = 1; i < 8; ++i) {
    EXPECT_EQ(fwd.timestamp(i + 1) - fwd.timestamp(i), 1);
    EXPECT_EQ(bwd.timestamp(i + 1) - bwd.timestamp(i), -1);
  }
  EXPECT_EQ(bwd.timestamp(1), 11);
}

TEST(PNet, BackwardIsForwardWithSwappedInputs) {
  torch::NoGradGuard guard;
  torch::manual_seed(1);
  PNet net(tiny());
  for (auto& p : net->parameters()) p.add_(0.05 * torch::randn_like(p));
  auto a = torch::rand({1, 3, 32, 32}), b = torch::rand({1, 3, 32, 32});
  auto bwd = net->forward(b, a, 12, Direction::backward);
  auto fwd_swapped = net->forward(b, a, 12, Direction::forward);
  for (int l = 0; l < 5; ++l) EXPECT_TRUE(torch::equal(bwd.frames[l], fwd_swapped.frames[l]));
}

TEST(PNet, UntrainedFramesAreMidGrayAndFlowsZero) {
  torch::NoGradGuard guard;
  PNet net(tiny());
  auto r = net->forward(torch::rand({1, 3, 32, 32}), torch::rand({1, 3, 32, 32}), 16, Direction::forward);
  for (const auto& f : r.pair_flows) EXPECT_EQ(f.abs().max().item<float>(), 0.0f);
  EXPECT_LT((r.frames[0] - 0.5).abs().max().item<double>(), 1e-6);
}

TEST(PNet, SkippingDecodingLeavesFramesEmpty) {
  torch::NoGradGuard guard;
  PNet net(tiny());
  auto r = net->forward(torch::rand({1, 3, 32, 32}), torch::rand({1, 3, 32, 32}), 16, Direction::forward, false);
  EXPECT_FALSE(r.has_frames());
  EXPECT_EQ(r.flow_count(), 37u);
  EXPECT_THROW(r.frame(1), std::logic_error);
}

TEST(PNet, RejectsGapsWithinReach) {
  PNet net(tiny());
  Frame a(torch::rand({3, 32, 32}));
  EXPECT_THROW(net->propagate(a, a, 8), RoutingError);
  EXPECT_THROW(net->forward(torch::rand({1, 3, 32, 32}), torch::rand({1, 3, 64, 32}), 12, Direction::forward),
               ShapeError);
}

TEST(PNet, BatchedSamplesAreIndependent) {
  torch::NoGradGuard guard;
  torch::manual_seed(2);
  PNet net(tiny(2));
  for (auto& p : net->parameters()) p.add_(0.05 * torch::randn_like(p));
  auto a = torch::rand({2, 3, 32, 32}), b = torch::rand({2, 3, 32, 32});
  auto both = net->forward(a, b, 10, Direction::forward);
  auto one = net->forward(a.narrow(0, 1, 1), b.narrow(0, 1, 1), 10, Direction::forward);
  EXPECT_LT(pinet::testing::max_abs_diff(both.frames[0].narrow(0, 1, 1), one.frames[0]), 1e-5);
}
