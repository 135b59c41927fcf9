#include "pinet/pnet.hpp"

namespace pinet {

void PNetConfig::validate() const {
  encoder.validate();
  propagation.validate();
  flow.validate();
}

FlowPyramid PropagationResult::flow(int src, int dst) const {
  const auto k = static_cast<int64_t>(schedule.index_of(src, dst));
  FlowPyramid out;
  out.src = src;
  out.dst = dst;
  for (int l = 1; l <= static_cast<int>(pair_flows.size()); ++l) out.levels.emplace_back(pair_flows[l - 1][k], l);
  return out;
}

FramePyramid PropagationResult::frame(int step) const {
  if (!has_frames()) throw std::logic_error("propagation ran without frame decoding");
  if (step < 1 || step > m()) throw std::out_of_range("propagated step outside [1,m]");
  FramePyramid out;
  for (const auto& level : frames) out.levels.push_back(level.select(1, step - 1));
  return out;
}

PNetImpl::PNetImpl(PNetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  encoder_ = register_module("encoder", Encoder(cfg_.encoder));
  m2fnet_ = register_module("m2fnet", M2FNet(cfg_.encoder, cfg_.propagation));
  ffnet_ = register_module("ffnet", FFNet(cfg_.encoder, cfg_.flow));
  decoder_ = register_module("decoder", FrameDecoder(cfg_.encoder, cfg_.propagation.m, cfg_.decoder));
}

PropagationResult PNetImpl::forward(const torch::Tensor& anchor, const torch::Tensor& reference, int n,
                                    Direction direction, bool decode_frames) {
  const int m = cfg_.propagation.m;
  if (n <= m) {
    throw RoutingError("propagation requires a gap above m=" + std::to_string(m) + ", got n=" + std::to_string(n));
  }
  if (anchor.sizes() != reference.sizes()) {
    throw ShapeError("propagate: anchor " + shape_string(anchor) + " vs reference " + shape_string(reference));
  }
  const auto batch = anchor.size(0);

  PropagationResult result;
  result.direction = direction;
  result.n = n;
  result.schedule = schedule_flows(m, n);

  // One encoder pass over both inputs.
  auto both = encoder_->forward(torch::cat({anchor, reference}, 0));
  result.anchor.base_channels = result.reference.base_channels = both.base_channels;
  for (const auto& level : both.levels) {
    auto halves = level.tensor().split(batch, 0);
    result.anchor.levels.emplace_back(halves[0], level.level());
    result.reference.levels.emplace_back(halves[1], level.level());
  }

  result.forecasts = m2fnet_->forward(result.anchor, result.reference);

  // Feature stack per level: index 0 anchor, 1..m forecasts, m+1 reference.
  const auto& pairs = result.schedule.pairs;
  std::vector<int64_t> first_idx, second_idx;
  for (const auto& p : pairs) {
    first_idx.push_back(p.src);
    second_idx.push_back(p.dst == n ? m + 1 : p.dst);
  }
  auto long_opts = torch::TensorOptions().dtype(torch::kLong);
  auto first_sel = torch::tensor(first_idx, long_opts);
  auto second_sel = torch::tensor(second_idx, long_opts);
  const auto count = static_cast<int64_t>(pairs.size());

  std::vector<torch::Tensor> stacks, first, second;
  for (int l = 1; l <= kPyramidLevels; ++l) {
    auto stack = torch::cat({result.anchor.at(l).unsqueeze(1), result.forecasts.refined[l - 1],
                             result.reference.at(l).unsqueeze(1)},
                            1);
    auto flat = [&](const torch::Tensor& sel) {
      auto picked = stack.index_select(1, sel).transpose(0, 1);
      return picked.reshape({count * batch, picked.size(2), picked.size(3), picked.size(4)});
    };
    first.push_back(flat(first_sel));
    second.push_back(flat(second_sel));
    stacks.push_back(stack);
  }
  auto flows = ffnet_->forward(first, second);
  for (auto& f : flows) result.pair_flows.push_back(f.view({count, batch, 2, f.size(2), f.size(3)}));

  if (!decode_frames) return result;

  std::vector<torch::Tensor> forecast, attended, anchor_rep, reference_rep;
  auto repeat = [m](const torch::Tensor& x) {
    return x.unsqueeze(1).expand({-1, m, -1, -1, -1}).reshape({-1, x.size(1), x.size(2), x.size(3)});
  };
  auto flatten = [](const torch::Tensor& x) { return x.reshape({-1, x.size(2), x.size(3), x.size(4)}); };
  for (int l = 1; l <= kPyramidLevels; ++l) {
    forecast.push_back(flatten(result.forecasts.refined[l - 1]));
    if (cfg_.decoder.use_attention) {
      auto past = stacks[l - 1].narrow(1, 0, m + 1);
      attended.push_back(flatten(decoder_->attend_all(past, pairs, result.pair_flows[l - 1])));
    }
    anchor_rep.push_back(repeat(result.anchor.at(l)));
    reference_rep.push_back(repeat(result.reference.at(l)));
  }
  auto decoded = decoder_->decode(forecast, attended, anchor_rep, reference_rep);
  for (auto& level : decoded.levels) {
    result.frames.push_back(level.view({batch, m, 3, level.size(2), level.size(3)}));
  }
  return result;
}

PropagationResult PNetImpl::propagate(const Frame& anchor_frame, const Frame& reference_frame, int n,
                                      Direction direction) {
  return forward(anchor_frame.batched(), reference_frame.batched(), n, direction);
}

}  // namespace pinet
