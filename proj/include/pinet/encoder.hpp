#pragma once

#include "pinet/layers.hpp"
#include "pinet/tensor_types.hpp"

#include <vector>

namespace pinet {

struct EncoderConfig {
  int base_channels = 16;
  double slope = kLeakySlope;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
  int64_t channels_at(int level) const { return static_cast<int64_t>(base_channels) << (level - 1); }
};

/// Per-frame feature pyramid, index 0 is level 1 (full resolution).
struct FeaturePyramid {
  std::vector<FeatureMap> levels;
  int base_channels = 0;

  const FeatureMap& level(int l) const { return levels.at(static_cast<size_t>(l - 1)); }
  const torch::Tensor& at(int l) const { return level(l).tensor(); }
  int64_t batch() const { return levels.front().tensor().size(0); }
};

/// Five blocks of two 3x3 convolutions. Blocks 2-5 open with a stride-2
/// convolution and double the channel count.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(EncoderConfig cfg = {});

  /// x is [N,3,H,W] with H, W divisible by 16.
  FeaturePyramid forward(const torch::Tensor& x);
  FeaturePyramid encode(const Frame& frame) { return forward(frame.batched()); }

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<torch::nn::Conv2d> first_, second_;
};
TORCH_MODULE(Encoder);

int64_t parameter_count(torch::nn::Module& module);

}  // namespace pinet
