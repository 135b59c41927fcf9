#pragma once

#include "pinet/encoder.hpp"
#include "pinet/ffnet.hpp"
#include "pinet/frame_decoder.hpp"
#include "pinet/m2fnet.hpp"

#include <vector>

namespace pinet {

struct PNetConfig {
  EncoderConfig encoder;
  PropagationConfig propagation;
  FlowNetConfig flow;
  FrameDecoderConfig decoder;

  void validate() const;
  bool operator==(const PNetConfig&) const = default;
};

enum class Direction { forward, backward };

/// Output of one propagation pass over a batch of N samples. Flow and frame
/// storage is batched; the accessors hand out per-pair and per-step views.
struct PropagationResult {
  Direction direction = Direction::forward;
  int n = 0;  ///< frame gap between anchor and reference
  FeaturePyramid anchor;
  FeaturePyramid reference;
  ForecastState forecasts;
  FlowPairSchedule schedule;
  std::vector<torch::Tensor> pair_flows;  ///< per level: [P,N,2,H,W], P = schedule size
  std::vector<torch::Tensor> frames;      ///< per level: [N,m,3,H,W]; empty when decoding was skipped

  int m() const { return forecasts.m; }
  size_t flow_count() const { return schedule.pairs.size(); }
  bool has_frames() const { return !frames.empty(); }

  /// Absolute timestamp of step i when the left input sits at 0 and the right at n.
  int timestamp(int step) const { return direction == Direction::forward ? step : n - step; }

  FlowPyramid flow(int src, int dst) const;
  FramePyramid frame(int step) const;
};

/// Encoder, motion-to-feature forecasting, feature flow estimation and frame
/// decoding for one propagation direction. The backward direction is the same
/// network with anchor and reference swapped.
class PNetImpl : public torch::nn::Module {
 public:
  explicit PNetImpl(PNetConfig cfg);

  /// anchor/reference: [N,3,H,W]. With decode_frames = false only forecasts and flows are produced.
  PropagationResult forward(const torch::Tensor& anchor, const torch::Tensor& reference, int n,
                            Direction direction, bool decode_frames = true);

  /// Single-sample propagation from `anchor_frame` toward `reference_frame` across gap n > m.
  PropagationResult propagate(const Frame& anchor_frame, const Frame& reference_frame, int n,
                              Direction direction = Direction::forward);

  const PNetConfig& config() const { return cfg_; }
  Encoder& encoder() { return encoder_; }
  M2FNet& m2fnet() { return m2fnet_; }
  FFNet& ffnet() { return ffnet_; }
  FrameDecoder& decoder() { return decoder_; }

 private:
  PNetConfig cfg_;
  Encoder encoder_{nullptr};
  M2FNet m2fnet_{nullptr};
  FFNet ffnet_{nullptr};
  FrameDecoder decoder_{nullptr};
};
TORCH_MODULE(PNet);

}  // namespace pinet
