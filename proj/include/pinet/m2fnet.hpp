#pragma once

#include "pinet/encoder.hpp"
#include "pinet/layers.hpp"
#include "pinet/tensor_types.hpp"

#include <optional>
#include <vector>

namespace pinet {

struct PropagationConfig {
  int m = 8;  ///< future features forecast per pass
  bool enable_global = true;
  bool enable_local = true;

  void validate() const;
  bool operator==(const PropagationConfig&) const = default;
};

/// Forecasts for every (step, level). Tensors are [N,m,C,H,W] per level,
/// indexed by level - 1; step i in 1..m lives at index i - 1 of dim 1.
struct ForecastState {
  int m = 0;
  std::vector<torch::Tensor> global;   ///< globally transformed anchor
  std::vector<torch::Tensor> refined;  ///< output of the local decoder
  std::vector<torch::Tensor> thetas;   ///< [N,m,2,3] per level

  FeatureMap global_at(int step, int level) const;
  FeatureMap forecast(int step, int level) const;
  /// Pyramid of the step-th forecast.
  FeaturePyramid pyramid(int step) const;
};

/// Global motion head for one level: two 3x3 convolutions, global average
/// pooling and a linear layer emitting m affine matrices. The linear layer
/// starts at zero weight with identity bias.
class GlobalDecoderImpl : public torch::nn::Module {
 public:
  GlobalDecoderImpl(int64_t channels, int m);
  /// Returns [N,m,2,3].
  torch::Tensor forward(const torch::Tensor& anchor, const torch::Tensor& reference);

 private:
  int m_;
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(GlobalDecoder);

/// Local refinement for one level: dense block over
/// (global forecast || anchor || reference || deconv(coarser forecast)),
/// added to the global forecast. The coarsest level has no coarser input.
class LocalDecoderImpl : public torch::nn::Module {
 public:
  LocalDecoderImpl(int64_t channels, int64_t coarser_channels);
  torch::Tensor forward(const torch::Tensor& global, const torch::Tensor& anchor, const torch::Tensor& reference,
                        const std::optional<torch::Tensor>& coarser);
  bool has_coarser_input() const { return !up_.is_empty(); }

 private:
  torch::nn::ConvTranspose2d up_{nullptr};
  DenseBlock block_{nullptr};
};
TORCH_MODULE(LocalDecoder);

/// u_hat_i = affine_transform(anchor, theta_i) for every step. thetas is [N,m,2,3];
/// the result is [N,m,C,H,W].
torch::Tensor global_forecast(const torch::Tensor& anchor, const torch::Tensor& thetas);
std::vector<FeatureMap> global_forecast(const FeatureMap& anchor, const std::vector<AffineParams>& thetas);

class M2FNetImpl : public torch::nn::Module {
 public:
  M2FNetImpl(const EncoderConfig& enc, PropagationConfig cfg);

  std::vector<AffineParams> decode_global(const FeatureMap& anchor, const FeatureMap& reference);
  FeatureMap local_refine(const FeatureMap& global, const FeatureMap& anchor, const FeatureMap& reference,
                          const std::optional<FeatureMap>& coarser);

  /// Coarse-to-fine forecast of m future features of `anchor`, conditioned on `reference`.
  ForecastState forward(const FeaturePyramid& anchor, const FeaturePyramid& reference);

  const PropagationConfig& config() const { return cfg_; }
  void set_ablation(bool enable_global, bool enable_local);

 private:
  EncoderConfig enc_;
  PropagationConfig cfg_;
  std::vector<GlobalDecoder> global_;
  std::vector<LocalDecoder> local_;
};
TORCH_MODULE(M2FNet);

}  // namespace pinet
