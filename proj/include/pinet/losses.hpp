#pragma once

#include "pinet/ffnet.hpp"
#include "pinet/inet.hpp"
#include "pinet/tensor_types.hpp"

#include <array>
#include <map>
#include <utility>
#include <vector>

namespace pinet {

struct LossWeights {
  /// Per-level weights, index l-1 (level 1 = full resolution).
  std::array<double, kPyramidLevels> flow_omega{0.005, 0.01, 0.02, 0.04, 0.08};
  std::array<double, kPyramidLevels> frame_omega{0.005, 0.01, 0.02, 0.04, 0.08};
  double lambda1 = 1.0;  ///< motion supervision
  double lambda2 = 1.0;  ///< propagated frames
  double lambda3 = 1.0;  ///< interpolated frames

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Ablation switches for the training objective.
struct LossToggles {
  bool no_m2fnet_loss = false;
  bool no_interframe_motion = false;
  bool no_direction_supervision = false;
  bool no_gdl = false;

  bool operator==(const LossToggles&) const = default;
};

/// Weights inside the interpolation objective. The gradient-difference term
/// stands in for a perceptual loss.
struct INetLossWeights {
  double reconstruction = 0.8;
  double warping = 0.4;
  double smoothness = 0.004;
  double gdl = 0.4;

  bool operator==(const INetLossWeights&) const = default;
};

struct LossBreakdown {
  double l_m2fnet = 0.0;
  double l_pnet = 0.0;  ///< includes l_gdl
  double l_gdl = 0.0;
  double l_inet = 0.0;
  double l_total = 0.0;
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 1.0;
};

/// Flows keyed by (src, dst); each entry holds one [N,2,H,W] tensor per level (index l-1).
using PairFlows = std::map<std::pair<int, int>, std::vector<torch::Tensor>>;

/// Pairs of the schedule that carry supervision under the given toggles.
std::vector<FlowPair> supervised_pairs(const FlowPairSchedule& schedule, const LossToggles& toggles);

/// Sum over pairs and levels of omega^l times the mean per-pixel endpoint error.
/// Both maps must hold exactly the same pairs and level counts.
torch::Tensor flow_loss(const PairFlows& estimated, const PairFlows& oracle, const LossWeights& w);

/// Gradient difference loss with exponent 1 on [..., H, W] tensors:
/// mean | |dx gt| - |dx pred| | + mean | |dy gt| - |dy pred| |.
torch::Tensor gdl(const torch::Tensor& pred, const torch::Tensor& gt);
double gdl(const Frame& pred, const Frame& gt);

/// Ground-truth pyramid by repeated 2x2 mean pooling; result[l-1] is level l.
std::vector<torch::Tensor> frame_pyramid(const torch::Tensor& frames, int levels = kPyramidLevels);

struct PNetLoss {
  torch::Tensor photometric;  ///< sum_l omega^l mean |x^l - x_hat^l|
  torch::Tensor gdl;          ///< finest level only; zero when disabled
  torch::Tensor total() const { return photometric + gdl; }
};

/// pred/gt: per level (index l-1) batches of frames [B,3,H_l,W_l].
PNetLoss pnet_loss(const std::vector<torch::Tensor>& pred, const std::vector<torch::Tensor>& gt,
                   const LossWeights& w, bool use_gdl = true);

/// Interpolation objective: reconstruction l1, warping l1, flow smoothness and GDL.
/// `targets` is [R,3,H,W] aligned with the queries used to produce `out`.
torch::Tensor inet_loss(const InterpolationOutput& out, const torch::Tensor& left, const torch::Tensor& right,
                        const torch::Tensor& targets, const std::vector<TimeQuery>& queries,
                        const INetLossWeights& w = {});

double total_loss(const LossBreakdown& parts, double lambda1, double lambda2, double lambda3);

}  // namespace pinet
