#include "pinet/encoder.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace pinet;
using torch::indexing::Slice;

TEST(Encoder, ShapeScheduleAt256) {
  torch::NoGradGuard guard;
  Encoder enc(EncoderConfig{});
  auto p = enc->forward(torch::rand({1, 3, 256, 256}));
  ASSERT_EQ(p.levels.size(), 5u);
  for (int l = 1; l <= 5; ++l) {
    const int64_t c = 16 << (l - 1), s = 256 >> (l - 1);
    EXPECT_EQ(p.at(l).sizes(), (std::vector<int64_t>{1, c, s, s})) << "level " << l;
    EXPECT_EQ(p.level(l).level(), l);
  }
}

TEST(Encoder, ShapeScheduleForRectangularInputs) {
  torch::NoGradGuard guard;
  Encoder enc(EncoderConfig{4});
  for (auto [h, w] : {std::pair<int64_t, int64_t>{16, 48}, {64, 32}, {32, 80}}) {
    auto p = enc->forward(torch::rand({2, 3, h, w}));
    for (int l = 1; l <= 5; ++l) {
      EXPECT_EQ(p.at(l).sizes(), (std::vector<int64_t>{2, 4 << (l - 1), h >> (l - 1), w >> (l - 1)}));
    }
  }
}

TEST(Encoder, Deterministic) {
  torch::NoGradGuard guard;
  Encoder enc(EncoderConfig{4});
  auto x = torch::rand({1, 3, 32, 32});
  auto a = enc->forward(x), b = enc->forward(x.clone());
  for (int l = 1; l <= 5; ++l) EXPECT_TRUE(torch::equal(a.at(l), b.at(l)));
}

TEST(Encoder, LevelOneIsShiftCovariantOnInterior) {
  torch::NoGradGuard guard;
  torch::manual_seed(3);
  Encoder enc(EncoderConfig{8});
  auto x = torch::rand({1, 3, 64, 64});
  auto shifted = torch::roll(x, {16}, {3});
  auto a = enc->forward(x).at(1);
  auto b = enc->forward(shifted).at(1);
  // Two 3x3 convolutions see 2 px on each side; stay clear of the zero padding and the wrap seam.
  auto lhs = b.index({Slice(), Slice(), Slice(2, 62), Slice(18, 62)});
  auto rhs = a.index({Slice(), Slice(), Slice(2, 62), Slice(2, 46)});
  EXPECT_LT(pinet::testing::max_abs_diff(lhs, rhs), 1e-4);
}

TEST(Encoder, RejectsIndivisibleSides) {
  Encoder enc(EncoderConfig{4});
  EXPECT_THROW(enc->forward(torch::rand({1, 3, 24, 32})), ShapeError);
  EXPECT_THROW(enc->forward(torch::rand({1, 4, 32, 32})), ShapeError);
}

TEST(Encoder, ConfigValidation) {
  EXPECT_THROW(EncoderConfig{3}.validate(), ConfigError);
  EXPECT_NO_THROW(EncoderConfig{4}.validate());
  EXPECT_EQ(EncoderConfig{}.base_channels, 16);
  EXPECT_EQ(EncoderConfig{}.slope, 0.1);
}

TEST(Encoder, ParameterCountIsClosedForm) {
  // Block 1: 3->c, c->c; block l: c_{l-1}->c_l (stride 2), c_l->c_l. 3x3 weights plus biases.
  for (int base : {4, 8, 16}) {
    int64_t expect = 0, in = 3;
    for (int l = 1; l <= 5; ++l) {
      const int64_t c = static_cast<int64_t>(base) << (l - 1);
      expect += 9 * in * c + c + 9 * c * c + c;
      in = c;
    }
    Encoder a(EncoderConfig{base}), b(EncoderConfig{base});
    EXPECT_EQ(parameter_count(*a), expect);
    EXPECT_EQ(parameter_count(*a), parameter_count(*b));
  }
}

TEST(Encoder, EncodeFrameMatchesBatchedForward) {
  torch::NoGradGuard guard;
  Encoder enc(EncoderConfig{4});
  Frame f(torch::rand({3, 32, 32}));
  auto a = enc->encode(f), b = enc->forward(f.batched());
  EXPECT_TRUE(torch::equal(a.at(3), b.at(3)));
}
