#pragma once

#include "pinet/encoder.hpp"
#include "pinet/layers.hpp"
#include "pinet/tensor_types.hpp"

#include <string_view>
#include <vector>

namespace pinet {

/// Role of a supervised flow in the propagation pattern.
enum class FlowTag {
  anchor,      ///< forecast t+i toward the anchor t
  interframe,  ///< forecast t+i toward an earlier forecast t+j
  direction,   ///< last forecast t+m toward the reference t+n
};

std::string_view to_string(FlowTag tag);

/// A flow f_{src->dst}: the field that backwarps `dst` toward `src`.
/// Indices are offsets from the anchor timestamp.
struct FlowPair {
  int src = 0;
  int dst = 0;
  FlowTag tag = FlowTag::anchor;

  friend bool operator==(const FlowPair&, const FlowPair&) = default;
  friend auto operator<=>(const FlowPair& a, const FlowPair& b) {
    return std::pair(a.src, a.dst) <=> std::pair(b.src, b.dst);
  }
};

struct FlowPairSchedule {
  int m = 0;
  int n = 0;
  std::vector<FlowPair> pairs;

  size_t count(FlowTag tag) const;
  bool contains(int src, int dst) const;
  /// Position of (src, dst) in `pairs`; throws std::out_of_range when absent.
  size_t index_of(int src, int dst) const;
};

/// Anchor pairs (i -> 0) for i = 1..m, interframe pairs (i -> j) for 1 <= j < i <= m,
/// then the direction pair (m -> n). Total m(m+1)/2 + 1.
FlowPairSchedule schedule_flows(int m, int n);

/// Flows at every level for one pair; levels[l-1] is level l.
struct FlowPyramid {
  std::vector<FlowField> levels;
  int src = 0;
  int dst = 0;

  const FlowField& level(int l) const { return levels.at(static_cast<size_t>(l - 1)); }
  const FlowField& finest() const { return levels.front(); }
};

struct FlowNetConfig {
  int radius = 4;
  std::vector<int> widths{128, 128, 96, 64, 32};

  void validate() const;
  bool operator==(const FlowNetConfig&) const = default;
};

/// Estimator for one level: a stack of 3x3 convolutions over
/// (first || cost volume || upsampled flow) predicting a flow residual.
/// The prediction layer is zero-initialized.
class FlowEstimatorImpl : public torch::nn::Module {
 public:
  FlowEstimatorImpl(int64_t in_channels, const std::vector<int>& widths);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Conv2d> layers_;
  torch::nn::Conv2d predict_{nullptr};
};
TORCH_MODULE(FlowEstimator);

class FFNetImpl : public torch::nn::Module {
 public:
  FFNetImpl(const EncoderConfig& enc, FlowNetConfig cfg);

  /// Batched estimation: first/second hold one [B,C,H,W] tensor per level (index l-1).
  /// Returns the flow f_{first->second} at every level, index l-1.
  std::vector<torch::Tensor> forward(const std::vector<torch::Tensor>& first,
                                     const std::vector<torch::Tensor>& second);

  FlowPyramid estimate_flow(const FeaturePyramid& first, const FeaturePyramid& second);

  const FlowNetConfig& config() const { return cfg_; }

 private:
  FlowNetConfig cfg_;
  std::vector<FlowEstimator> estimators_;
};
TORCH_MODULE(FFNet);

}  // namespace pinet
