#include "pinet/numerics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace pinet;
using namespace pinet::numerics;
using pinet::testing::gradient_check;
using pinet::testing::max_abs_diff;
using torch::indexing::None;
using torch::indexing::Slice;

namespace {

torch::Tensor rand64(std::vector<int64_t> shape) { return torch::rand(shape, torch::kFloat64); }

}  // namespace

TEST(Backwarp, ZeroFlowIsIdentity) {
  torch::manual_seed(1);
  auto src = torch::rand({2, 5, 16, 16});
  auto out = backwarp(src, torch::zeros({2, 2, 16, 16}));
  // float32 coordinate normalization in the sampler leaves ~1e-6 of roundoff.
  EXPECT_LT(max_abs_diff(out, src), 1e-5);
}

TEST(Backwarp, IntegerShiftRecoversInterior) {
  torch::manual_seed(2);
  auto img = rand64({1, 3, 16, 16});
  // shifted(x) = img(x - 3): the content moved right by 3 px.
  auto shifted = torch::zeros_like(img);
  shifted.index_put_({Slice(), Slice(), Slice(), Slice(3, None)}, img.index({Slice(), Slice(), Slice(), Slice(None, -3)}));
  auto flow = torch::zeros({1, 2, 16, 16}, torch::kFloat64);
  flow.select(1, 0).fill_(3.0);
  auto out = backwarp(shifted, flow);
  auto interior = Slice(0, 13);
  EXPECT_LT(max_abs_diff(out.index({Slice(), Slice(), Slice(), interior}), img.index({Slice(), Slice(), Slice(), interior})),
            1e-9);
}

TEST(Backwarp, MatchesGatherReferenceWithBorderClamping) {
  torch::manual_seed(3);
  auto src = rand64({2, 3, 8, 8});
  auto flow = (rand64({2, 2, 8, 8}) - 0.5) * 12.0;  // many samples leave the frame
  auto gx = torch::arange(8, torch::kFloat64).view({1, 1, 8}) + flow.select(1, 0);
  auto gy = torch::arange(8, torch::kFloat64).view({1, 8, 1}) + flow.select(1, 1);
  EXPECT_LT(max_abs_diff(backwarp(src, flow), bilinear_sample(src, gx, gy)), 1e-12);
}

TEST(Backwarp, GradientMatchesFiniteDifferences) {
  torch::manual_seed(4);
  auto src = rand64({1, 2, 8, 8});
  // Keep sample points away from integer grid lines and the border, where bilinear is not differentiable.
  auto flow = torch::full({1, 2, 8, 8}, 0.3, torch::kFloat64) + 0.2 * rand64({1, 2, 8, 8});
  auto weights = rand64({1, 2, 8, 8});
  auto f = [&](const std::vector<torch::Tensor>& in) { return (backwarp(in[0], in[1]) * weights).sum(); };
  EXPECT_LT(gradient_check(f, {src, flow}), 1e-3);
}

TEST(Backwarp, RejectsMismatchedShapes) {
  EXPECT_THROW(backwarp(torch::rand({1, 3, 8, 8}), torch::zeros({1, 2, 4, 4})), ShapeError);
  EXPECT_THROW(backwarp(torch::rand({1, 3, 8, 8}), torch::zeros({1, 3, 8, 8})), ShapeError);
}

TEST(Backwarp, TypedOverloadsKeepLevels) {
  FeatureMap f(torch::rand({1, 4, 8, 8}), 2);
  FlowField flow(torch::zeros({1, 2, 8, 8}), 2);
  EXPECT_EQ(backwarp(f, flow).level(), 2);
  Frame frame(torch::rand({3, 16, 16}));
  auto out = backwarp(frame, FlowField(torch::zeros({1, 2, 16, 16}), 1));
  EXPECT_LT(max_abs_diff(out.tensor(), frame.tensor()), 1e-5);
}

TEST(Correlate, SelfCorrelationRadiusZeroIsMeanSquare) {
  torch::manual_seed(5);
  auto a = torch::randn({2, 6, 5, 7});
  auto c = correlate(a, a, 0);
  ASSERT_EQ(c.sizes(), (std::vector<int64_t>{2, 1, 5, 7}));
  EXPECT_LT(max_abs_diff(c.squeeze(1), (a * a).mean(1)), 1e-6);
}

TEST(Correlate, ZeroOperandGivesZeroVolume) {
  auto c = correlate(torch::randn({1, 4, 6, 6}), torch::zeros({1, 4, 6, 6}), 2);
  ASSERT_EQ(c.size(1), 25);
  EXPECT_EQ(c.abs().max().item<float>(), 0.0f);
}

TEST(Correlate, RadiusFourHas81Channels) {
  EXPECT_EQ(correlate(torch::rand({1, 2, 4, 4}), torch::rand({1, 2, 4, 4}), 4).size(1), 81);
}

TEST(Correlate, MatchesBruteForce) {
  torch::manual_seed(6);
  auto a = rand64({2, 3, 4, 4});
  auto b = rand64({2, 3, 4, 4});
  const int r = 2;
  auto c = correlate(a, b, r);
  auto ac = a.accessor<double, 4>();
  auto bc = b.accessor<double, 4>();
  auto cc = c.accessor<double, 4>();
  for (int n = 0; n < 2; ++n) {
    for (int dy = -r, k = 0; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx, ++k) {
        for (int y = 0; y < 4; ++y) {
          for (int x = 0; x < 4; ++x) {
            double expect = 0.0;
            if (y + dy >= 0 && y + dy < 4 && x + dx >= 0 && x + dx < 4) {
              for (int ch = 0; ch < 3; ++ch) expect += ac[n][ch][y][x] * bc[n][ch][y + dy][x + dx];
              expect /= 3.0;
            }
            ASSERT_NEAR(cc[n][k][y][x], expect, 1e-12) << "dy=" << dy << " dx=" << dx;
          }
        }
      }
    }
  }
}

TEST(Correlate, GradientMatchesFiniteDifferences) {
  torch::manual_seed(7);
  auto a = rand64({1, 3, 6, 6});
  auto b = rand64({1, 3, 6, 6});
  auto weights = rand64({1, 9, 6, 6});
  auto f = [&](const std::vector<torch::Tensor>& in) { return (correlate(in[0], in[1], 1) * weights).sum(); };
  EXPECT_LT(gradient_check(f, {a, b}), 1e-3);
}

TEST(Correlate, RejectsBadArguments) {
  EXPECT_THROW(correlate(torch::rand({1, 2, 4, 4}), torch::rand({1, 2, 4, 5}), 1), ShapeError);
  EXPECT_THROW(correlate(torch::rand({1, 2, 4, 4}), torch::rand({1, 2, 4, 4}), -1), std::invalid_argument);
}

TEST(UpsampleFlow, UniformFlowDoubles) {
  auto f = torch::zeros({1, 2, 4, 4});
  f.select(1, 0).fill_(1.0);
  auto up = upsample_flow(f);
  ASSERT_EQ(up.sizes(), (std::vector<int64_t>{1, 2, 8, 8}));
  EXPECT_LT(max_abs_diff(up.select(1, 0), torch::full({1, 8, 8}, 2.0)), 1e-6);
  EXPECT_LT(up.select(1, 1).abs().max().item<double>(), 1e-9);
  EXPECT_EQ(upsample_flow(torch::zeros({1, 2, 4, 4})).abs().max().item<float>(), 0.0f);
}

TEST(UpsampleFlow, RoundTripOnLinearRamp) {
  // f(x, y) = (0.25 x, -0.1 y) at 8x8.
  auto xs = torch::arange(8, torch::kFloat64).view({1, 8}).expand({8, 8});
  auto ys = torch::arange(8, torch::kFloat64).view({8, 1}).expand({8, 8});
  auto f = torch::stack({0.25 * xs, -0.1 * ys}, 0).unsqueeze(0);
  auto back = downsample2x(upsample_flow(f)) / 2.0;
  // Interior: bilinear upsampling clamps at the border, which bends the ramp there.
  auto in = Slice(1, 7);
  EXPECT_LT(max_abs_diff(back.index({Slice(), Slice(), in, in}), f.index({Slice(), Slice(), in, in})), 0.05);
  EXPECT_LT(max_abs_diff(back, f), 0.1);
}

TEST(UpsampleFlow, GradientMatchesFiniteDifferences) {
  torch::manual_seed(8);
  auto weights = rand64({1, 2, 8, 8});
  auto f = [&](const std::vector<torch::Tensor>& in) { return (upsample_flow(in[0]) * weights).sum(); };
  EXPECT_LT(gradient_check(f, {rand64({1, 2, 4, 4})}), 1e-3);
}

TEST(UpsampleFlow, TypedLevelDecreases) {
  FlowField f(torch::zeros({1, 2, 4, 4}), 3);
  EXPECT_EQ(upsample_flow(f).level(), 2);
  EXPECT_THROW(upsample_flow(FlowField(torch::zeros({1, 2, 4, 4}), 1)), ShapeError);
}

TEST(DownsampleFlow, HalvesValues) {
  auto f = torch::full({1, 2, 8, 8}, 4.0);
  EXPECT_LT(max_abs_diff(downsample_flow(f), torch::full({1, 2, 4, 4}, 2.0)), 1e-9);
}

TEST(Affine, IdentityParamsAreExact) {
  auto id = AffineParams::identity(2).tensor();
  auto expect = torch::tensor({1.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f}).view({1, 2, 3}).expand({2, 2, 3});
  EXPECT_TRUE(torch::equal(id, expect));
}

TEST(Affine, IdentityTransformKeepsSource) {
  torch::manual_seed(9);
  auto src = torch::rand({2, 4, 8, 12});
  auto out = affine_transform(src, AffineParams::identity(2).tensor());
  EXPECT_LT(max_abs_diff(out, src), 1e-5);
}

TEST(Affine, TranslationShiftsByWholePixels) {
  torch::manual_seed(10);
  auto src = rand64({1, 2, 8, 8});
  const int d = 2;
  auto theta = AffineParams::identity(1, torch::kFloat64).tensor().clone();
  theta[0][0][2] = 2.0 / 8.0 * d;
  auto out = affine_transform(src, theta);
  // Output pixel x samples src at x + d.
  EXPECT_LT(max_abs_diff(out.index({Slice(), Slice(), Slice(), Slice(0, 8 - d)}),
                         src.index({Slice(), Slice(), Slice(), Slice(d, 8)})),
            1e-9);
}

TEST(Affine, SamplePointsMatchNativeGrid) {
  torch::manual_seed(11);
  auto src = rand64({2, 3, 8, 8});
  auto theta = AffineParams::identity(2, torch::kFloat64).tensor() + 0.2 * (rand64({2, 2, 3}) - 0.5);
  auto [x, y] = affine_sample_points(theta, 8, 8);
  EXPECT_LT(max_abs_diff(affine_transform(src, theta), bilinear_sample(src, x, y)), 1e-9);
}

TEST(Affine, GradientMatchesFiniteDifferences) {
  torch::manual_seed(12);
  auto src = rand64({1, 2, 8, 8});
  // Shifts of 0.3 and -0.25 px keep every sample off the grid lines where bilinear sampling has kinks.
  auto theta = torch::tensor({1.0, 0.0, 0.075, 0.0, 1.0, -0.0625}, torch::kFloat64).view({1, 2, 3});
  auto weights = rand64({1, 2, 8, 8});
  auto f = [&](const std::vector<torch::Tensor>& in) { return (affine_transform(in[0], in[1]) * weights).sum(); };
  EXPECT_LT(gradient_check(f, {src, theta}), 1e-3);
}

TEST(Psnr, IdenticalFramesHitTheCap) {
  Frame a(torch::rand({3, 16, 16}));
  EXPECT_EQ(psnr(a, a), 100.0);
}

TEST(Psnr, UniformOffsetOfOneTenthIsTwentyDb) {
  auto a = torch::rand({3, 16, 16}) * 0.9;
  EXPECT_NEAR(psnr(Frame(a), Frame(a + 0.1)), 20.0, 1e-4);
}

TEST(Psnr, MatchesDirectFormulaAndIsSymmetric) {
  torch::manual_seed(13);
  Frame a(torch::rand({3, 32, 32})), b(torch::rand({3, 32, 32}));
  auto ad = a.tensor().to(torch::kFloat64), bd = b.tensor().to(torch::kFloat64);
  double mse = 0.0;
  auto ac = ad.accessor<double, 3>(), bc = bd.accessor<double, 3>();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) mse += (ac[c][y][x] - bc[c][y][x]) * (ac[c][y][x] - bc[c][y][x]);
  mse /= 3 * 32 * 32;
  EXPECT_NEAR(psnr(a, b), 10.0 * std::log10(1.0 / mse), 1e-6);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, RejectsShapeMismatch) {
  EXPECT_THROW(psnr(Frame(torch::rand({3, 16, 16})), Frame(torch::rand({3, 16, 32}))), ShapeError);
}

TEST(Ssim, IdenticalIsOne) {
  Frame a(torch::rand({3, 16, 16}));
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ZeroVersusOneIsNearZero) {
  EXPECT_LT(ssim(Frame(torch::zeros({3, 16, 16})), Frame(torch::ones({3, 16, 16}))), 0.01);
}

TEST(Ssim, Symmetric) {
  torch::manual_seed(14);
  Frame a(torch::rand({3, 32, 32})), b(torch::rand({3, 32, 32}));
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
  EXPECT_THROW(ssim(torch::rand({3, 8, 8}), torch::rand({3, 8, 8})), ShapeError);
}

TEST(FrameType, ValidatesShapeAndRange) {
  EXPECT_THROW(Frame(torch::rand({3, 15, 16})), ShapeError);
  EXPECT_THROW(Frame(torch::rand({4, 16, 16})), ShapeError);
  EXPECT_THROW(Frame(torch::full({3, 16, 16}, 1.5)), std::domain_error);
  EXPECT_NO_THROW(Frame::clamped(torch::full({3, 16, 16}, 1.5)));
}
