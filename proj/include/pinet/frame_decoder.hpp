#pragma once

#include "pinet/encoder.hpp"
#include "pinet/ffnet.hpp"
#include "pinet/layers.hpp"
#include "pinet/m2fnet.hpp"

#include <vector>

namespace pinet {

struct FrameDecoderConfig {
  bool use_attention = true;     ///< feed the attended past features to the decoder
  bool warp_anchor_only = false;  ///< restrict the attention sum to the anchor feature

  bool operator==(const FrameDecoderConfig&) const = default;
};

/// Decoded frames per level, levels[l-1] is [N,3,H_l,W_l]. Levels are unclamped so the
/// losses see the raw output; frame() clamps the finest level for metrics and IO.
struct FramePyramid {
  std::vector<torch::Tensor> levels;

  const torch::Tensor& level(int l) const { return levels.at(static_cast<size_t>(l - 1)); }
  const torch::Tensor& finest() const { return levels.front(); }
  Frame frame(int64_t sample = 0) const { return Frame::clamped(finest()[sample].detach()); }
};

/// v = sum_j alpha_j * backwarp(past_j, flow_j). alpha is indexed like `past`.
FeatureMap attend_past(const std::vector<FeatureMap>& past, const std::vector<FlowField>& flows,
                       const torch::Tensor& alpha);

/// Coarse-to-fine frame decoder. At each level a dense block maps
/// (forecast || attended || anchor || reference || up(coarser frame)) to a
/// frame residual over the upsampled coarser frame.
class FrameDecoderImpl : public torch::nn::Module {
 public:
  FrameDecoderImpl(const EncoderConfig& enc, int m, FrameDecoderConfig cfg = {});

  /// Attended past features for all m targets at one level.
  /// features: [N,m+1,C,H,W] (index 0 = anchor), pair_flows: [P,N,2,H,W] aligned with
  /// `pairs` (direction pairs are ignored). Returns [N,m,C,H,W].
  torch::Tensor attend_all(const torch::Tensor& features, const std::vector<FlowPair>& pairs,
                           const torch::Tensor& pair_flows);

  /// Decode a batch of frames. Every argument is per level (index l-1) with batch B:
  /// forecast, attended, anchor and reference features. `attended` may be empty when
  /// attention is disabled.
  FramePyramid decode(const std::vector<torch::Tensor>& forecast, const std::vector<torch::Tensor>& attended,
                      const std::vector<torch::Tensor>& anchor, const std::vector<torch::Tensor>& reference);

  /// Decode the frame for one target step from already attended features.
  FramePyramid decode_frame(const ForecastState& forecast, const std::vector<FeatureMap>& attended,
                            const FeaturePyramid& anchor, const FeaturePyramid& reference, int target_step);

  torch::Tensor& alpha() { return alpha_; }
  const FrameDecoderConfig& config() const { return cfg_; }

 private:
  int m_;
  FrameDecoderConfig cfg_;
  torch::Tensor alpha_;
  std::vector<DenseBlock> blocks_;
};
TORCH_MODULE(FrameDecoder);

}  // namespace pinet
