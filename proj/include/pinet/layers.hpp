#pragma once

#include <torch/torch.h>

namespace pinet {

inline constexpr double kLeakySlope = 0.1;

/// Same-padded convolution, He-initialized for the leaky activation that follows it.
inline torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel = 3, int64_t stride = 1) {
  torch::nn::Conv2d c(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
  torch::NoGradGuard guard;
  torch::nn::init::kaiming_normal_(c->weight, kLeakySlope, torch::kFanIn, torch::kLeakyReLU);
  c->bias.zero_();
  return c;
}

inline torch::Tensor leaky(const torch::Tensor& x, double slope = kLeakySlope) {
  return torch::leaky_relu(x, slope);
}

inline void zero_init(torch::nn::Conv2d& c) {
  torch::NoGradGuard guard;
  c->weight.zero_();
  if (c->bias.defined()) c->bias.zero_();
}

/// Three densely connected 3x3 convolutions: each layer sees the block input
/// concatenated with every earlier layer's output. The last layer is linear and
/// zero-initialized, so a fresh block contributes nothing to a residual sum.
class DenseBlockImpl : public torch::nn::Module {
 public:
  DenseBlockImpl(int64_t in, int64_t growth, int64_t out, double slope = kLeakySlope);

  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr}, c3_{nullptr};
  double slope_;
};
TORCH_MODULE(DenseBlock);

}  // namespace pinet
