#include "pinet/encoder.hpp"

namespace pinet {

void EncoderConfig::validate() const {
  if (base_channels < 4) throw ConfigError("encoder.base_channels must be >= 4");
  if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("encoder.slope must lie in [0,1)");
}

EncoderImpl::EncoderImpl(EncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  int64_t in = 3;
  for (int l = 1; l <= kPyramidLevels; ++l) {
    const auto out = cfg_.channels_at(l);
    const int64_t stride = l == 1 ? 1 : 2;
    first_.push_back(register_module("block" + std::to_string(l) + "_conv1", conv(in, out, 3, stride)));
    second_.push_back(register_module("block" + std::to_string(l) + "_conv2", conv(out, out)));
    in = out;
  }
}

FeaturePyramid EncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) % kFrameAlignment != 0 || x.size(3) % kFrameAlignment != 0) {
    throw ShapeError("encoder input must be [N,3,H,W] with sides divisible by " +
                     std::to_string(kFrameAlignment) + ", got " + shape_string(x));
  }
  FeaturePyramid pyramid;
  pyramid.base_channels = cfg_.base_channels;
  auto h = x;
  for (int l = 0; l < kPyramidLevels; ++l) {
    h = leaky(first_[l](h), cfg_.slope);
    h = leaky(second_[l](h), cfg_.slope);
    pyramid.levels.emplace_back(h, l + 1);
  }
  return pyramid;
}

int64_t parameter_count(torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace pinet
