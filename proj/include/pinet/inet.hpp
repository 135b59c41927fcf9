#pragma once

#include "pinet/layers.hpp"
#include "pinet/tensor_types.hpp"

#include <utility>
#include <vector>

namespace pinet {

struct INetConfig {
  int width = 16;  ///< first-stage width; 32 in the full-size network
  double visibility_eps = 1e-3;

  void validate() const;
  bool operator==(const INetConfig&) const = default;
};

/// U-shaped network with five average-pool stages and skip connections.
/// Widths are width * {1, 2, 4, 8, 16, 16}; the output convolution is linear and zero-initialized.
class UNetImpl : public torch::nn::Module {
 public:
  UNetImpl(int64_t in, int64_t out, int64_t width);
  /// Input sides must be divisible by 32.
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  std::vector<std::pair<torch::nn::Conv2d, torch::nn::Conv2d>> down_, up_;
};
TORCH_MODULE(UNet);

/// Approximate flows from time tau toward 0 and 1 given F_{0->1} and F_{1->0}.
std::pair<torch::Tensor, torch::Tensor> intermediate_flows(const torch::Tensor& flow01, const torch::Tensor& flow10,
                                                           double tau);

struct InterpolationRequest {
  Frame left;
  Frame right;
  std::vector<double> times;

  void validate() const;
};

/// One requested synthesis: which sample of the batch and at which time.
struct TimeQuery {
  int64_t sample = 0;
  double tau = 0.5;
};

struct InterpolationOutput {
  torch::Tensor frames;   ///< [R,3,H,W] in query order, clamped to [0,1]
  torch::Tensor flow01;   ///< [N,2,H,W]
  torch::Tensor flow10;   ///< [N,2,H,W]
  torch::Tensor flow_t0;  ///< refined, [R,2,H,W]
  torch::Tensor flow_t1;
  torch::Tensor visibility0;  ///< [R,1,H,W] in [eps, 1-eps]
};

/// Flow-based interpolation backbone: a flow U-net predicts both input flows,
/// a refinement U-net corrects the approximated intermediate flows and predicts
/// a visibility map, and the output blends both warped inputs.
class INetImpl : public torch::nn::Module {
 public:
  explicit INetImpl(INetConfig cfg = {});

  /// Returns (F_{0->1}, F_{1->0}) for [N,3,H,W] inputs.
  std::pair<torch::Tensor, torch::Tensor> compute_bidirectional_flow(const torch::Tensor& left,
                                                                     const torch::Tensor& right);

  InterpolationOutput forward(const torch::Tensor& left, const torch::Tensor& right,
                              const std::vector<TimeQuery>& queries);

  std::vector<Frame> interpolate_at(const InterpolationRequest& req);

  const INetConfig& config() const { return cfg_; }

 private:
  INetConfig cfg_;
  UNet flow_net_{nullptr};
  UNet refine_net_{nullptr};
};
TORCH_MODULE(INet);

}  // namespace pinet
