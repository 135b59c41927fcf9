#include "pinet/frame_decoder.hpp"

#include "pinet/numerics.hpp"

namespace pinet {

FeatureMap attend_past(const std::vector<FeatureMap>& past, const std::vector<FlowField>& flows,
                       const torch::Tensor& alpha) {
  if (past.empty() || past.size() != flows.size()) {
    throw ShapeError("attend_past: " + std::to_string(past.size()) + " features vs " +
                     std::to_string(flows.size()) + " flows");
  }
  if (alpha.dim() != 1 || alpha.size(0) < static_cast<int64_t>(past.size())) {
    throw ShapeError("attend_past: attention vector too short");
  }
  torch::Tensor sum;
  for (size_t j = 0; j < past.size(); ++j) {
    auto term = alpha[static_cast<int64_t>(j)] * numerics::backwarp(past[j].tensor(), flows[j].tensor());
    sum = sum.defined() ? sum + term : term;
  }
  return FeatureMap(sum, past.front().level());
}

FrameDecoderImpl::FrameDecoderImpl(const EncoderConfig& enc, int m, FrameDecoderConfig cfg) : m_(m), cfg_(cfg) {
  alpha_ = register_parameter("alpha", torch::ones({m}));
  for (int l = 1; l <= kPyramidLevels; ++l) {
    const auto c = enc.channels_at(l);
    const int64_t in = (cfg_.use_attention ? 4 : 3) * c + (l == kPyramidLevels ? 0 : 3);
    blocks_.push_back(register_module("level" + std::to_string(l), DenseBlock(in, c, 3)));
  }
}

torch::Tensor FrameDecoderImpl::attend_all(const torch::Tensor& features, const std::vector<FlowPair>& pairs,
                                           const torch::Tensor& pair_flows) {
  const auto n = features.size(0);
  const auto c = features.size(2), h = features.size(3), w = features.size(4);
  std::vector<int64_t> rows, targets, sources;
  for (size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    if (p.tag == FlowTag::direction) continue;
    if (cfg_.warp_anchor_only && p.dst != 0) continue;
    rows.push_back(static_cast<int64_t>(k));
    targets.push_back(p.src - 1);
    sources.push_back(p.dst);
  }
  auto opts = torch::TensorOptions().dtype(torch::kLong);
  auto row_idx = torch::tensor(rows, opts);
  auto target_idx = torch::tensor(targets, opts);
  auto source_idx = torch::tensor(sources, opts);
  const auto count = static_cast<int64_t>(rows.size());

  // [count,N,C,H,W] sources and [count,N,2,H,W] flows, warped in one batch.
  auto src = features.index_select(1, source_idx).transpose(0, 1).reshape({count * n, c, h, w});
  auto flow = pair_flows.index_select(0, row_idx).reshape({count * n, 2, h, w});
  auto warped = numerics::backwarp(src, flow).view({count, n, c, h, w});
  auto weighted = warped * alpha_.index_select(0, source_idx).view({count, 1, 1, 1, 1});
  auto sum = torch::zeros({m_, n, c, h, w}, features.options()).index_add(0, target_idx, weighted);
  return sum.transpose(0, 1);
}

FramePyramid FrameDecoderImpl::decode(const std::vector<torch::Tensor>& forecast,
                                      const std::vector<torch::Tensor>& attended,
                                      const std::vector<torch::Tensor>& anchor,
                                      const std::vector<torch::Tensor>& reference) {
  FramePyramid out;
  out.levels.resize(kPyramidLevels);
  torch::Tensor coarser;
  for (int l = kPyramidLevels; l >= 1; --l) {
    const auto& u = forecast[l - 1];
    std::vector<torch::Tensor> inputs{u};
    if (cfg_.use_attention) inputs.push_back(attended.at(static_cast<size_t>(l - 1)));
    inputs.push_back(anchor[l - 1]);
    inputs.push_back(reference[l - 1]);
    torch::Tensor base;
    if (coarser.defined()) {
      base = numerics::upsample2x(coarser);
      inputs.push_back(base);
    } else {
      base = torch::full({u.size(0), 3, u.size(2), u.size(3)}, 0.5, u.options());
    }
    auto frame = base + blocks_[l - 1](torch::cat(inputs, 1));
    out.levels[l - 1] = frame;
    coarser = frame;
  }
  return out;
}

FramePyramid FrameDecoderImpl::decode_frame(const ForecastState& forecast, const std::vector<FeatureMap>& attended,
                                            const FeaturePyramid& anchor, const FeaturePyramid& reference,
                                            int target_step) {
  if (attended.size() != static_cast<size_t>(kPyramidLevels)) {
    throw ShapeError("decode_frame: attended features required at every level");
  }
  std::vector<torch::Tensor> u, v, a, r;
  for (int l = 1; l <= kPyramidLevels; ++l) {
    u.push_back(forecast.forecast(target_step, l).tensor());
    v.push_back(attended[l - 1].tensor());
    a.push_back(anchor.at(l));
    r.push_back(reference.at(l));
  }
  return decode(u, v, a, r);
}

}  // namespace pinet
