#include "pinet/ffnet.hpp"

#include "pinet/numerics.hpp"

#include <algorithm>

namespace pinet {

std::string_view to_string(FlowTag tag) {
  switch (tag) {
    case FlowTag::anchor: return "anchor";
    case FlowTag::interframe: return "interframe";
    case FlowTag::direction: return "direction";
  }
  return "?";
}

size_t FlowPairSchedule::count(FlowTag tag) const {
  return static_cast<size_t>(std::count_if(pairs.begin(), pairs.end(), [tag](const FlowPair& p) { return p.tag == tag; }));
}

bool FlowPairSchedule::contains(int src, int dst) const {
  return std::any_of(pairs.begin(), pairs.end(), [&](const FlowPair& p) { return p.src == src && p.dst == dst; });
}

size_t FlowPairSchedule::index_of(int src, int dst) const {
  for (size_t k = 0; k < pairs.size(); ++k) {
    if (pairs[k].src == src && pairs[k].dst == dst) return k;
  }
  throw std::out_of_range("flow pair " + std::to_string(src) + "->" + std::to_string(dst) + " not scheduled");
}

FlowPairSchedule schedule_flows(int m, int n) {
  if (m < 1) throw std::invalid_argument("schedule_flows: m must be >= 1");
  if (n <= m) throw RoutingError("schedule_flows: gap n=" + std::to_string(n) + " must exceed m=" + std::to_string(m));
  FlowPairSchedule s;
  s.m = m;
  s.n = n;
  for (int i = 1; i <= m; ++i) s.pairs.push_back({i, 0, FlowTag::anchor});
  for (int i = 2; i <= m; ++i) {
    for (int j = 1; j < i; ++j) s.pairs.push_back({i, j, FlowTag::interframe});
  }
  s.pairs.push_back({m, n, FlowTag::direction});
  return s;
}

void FlowNetConfig::validate() const {
  if (radius < 0) throw ConfigError("ffnet.radius must be >= 0");
  if (widths.empty()) throw ConfigError("ffnet.widths must not be empty");
  for (int w : widths) {
    if (w < 1) throw ConfigError("ffnet.widths entries must be positive");
  }
}

FlowEstimatorImpl::FlowEstimatorImpl(int64_t in_channels, const std::vector<int>& widths) {
  int64_t in = in_channels;
  for (size_t k = 0; k < widths.size(); ++k) {
    layers_.push_back(register_module("conv" + std::to_string(k + 1), conv(in, widths[k])));
    in = widths[k];
  }
  predict_ = register_module("predict", conv(in, 2));
  zero_init(predict_);
}

torch::Tensor FlowEstimatorImpl::forward(const torch::Tensor& x) {
  auto h = x;
  for (auto& layer : layers_) h = leaky(layer(h));
  return predict_(h);
}

FFNetImpl::FFNetImpl(const EncoderConfig& enc, FlowNetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int64_t corr = (2 * cfg_.radius + 1) * (2 * cfg_.radius + 1);
  for (int l = 1; l <= kPyramidLevels; ++l) {
    estimators_.push_back(register_module("level" + std::to_string(l),
                                          FlowEstimator(enc.channels_at(l) + corr + 2, cfg_.widths)));
  }
}

std::vector<torch::Tensor> FFNetImpl::forward(const std::vector<torch::Tensor>& first,
                                              const std::vector<torch::Tensor>& second) {
  if (first.size() != static_cast<size_t>(kPyramidLevels) || second.size() != first.size()) {
    throw ShapeError("FFNet expects full pyramids");
  }
  std::vector<torch::Tensor> flows(kPyramidLevels);
  torch::Tensor coarser;
  for (int l = kPyramidLevels; l >= 1; --l) {
    const auto& a = first[l - 1];
    const auto& b = second[l - 1];
    if (a.sizes() != b.sizes()) {
      throw ShapeError("FFNet: level " + std::to_string(l) + " shapes differ " + shape_string(a) + " vs " +
                       shape_string(b));
    }
    torch::Tensor up = coarser.defined() ? numerics::upsample_flow(coarser)
                                         : torch::zeros({a.size(0), 2, a.size(2), a.size(3)}, a.options());
    torch::Tensor warped = coarser.defined() ? numerics::backwarp(b, up) : b;
    auto cost = leaky(numerics::correlate(a, warped, cfg_.radius));
    auto flow = up + estimators_[l - 1](torch::cat({a, cost, up}, 1));
    flows[l - 1] = flow;
    coarser = flow;
  }
  return flows;
}

FlowPyramid FFNetImpl::estimate_flow(const FeaturePyramid& first, const FeaturePyramid& second) {
  std::vector<torch::Tensor> a, b;
  for (int l = 1; l <= kPyramidLevels; ++l) {
    a.push_back(first.at(l));
    b.push_back(second.at(l));
  }
  auto flows = forward(a, b);
  FlowPyramid out;
  for (int l = 1; l <= kPyramidLevels; ++l) out.levels.emplace_back(flows[l - 1], l);
  return out;
}

}  // namespace pinet
