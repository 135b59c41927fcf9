#include "pinet/m2fnet.hpp"

#include "pinet/numerics.hpp"

namespace pinet {

void PropagationConfig::validate() const {
  if (m < 1) throw ConfigError("propagation.m must be >= 1");
  if (!enable_global && !enable_local) {
    throw ConfigError("propagation: at least one of the global and local decoders must be enabled");
  }
}

namespace {

FeatureMap slice_step(const std::vector<torch::Tensor>& per_level, int m, int step, int level) {
  if (step < 1 || step > m) throw std::out_of_range("forecast step outside [1,m]");
  return FeatureMap(per_level.at(static_cast<size_t>(level - 1)).select(1, step - 1), level);
}

torch::Tensor repeat_steps(const torch::Tensor& x, int m) {
  // [N,C,H,W] -> [N*m,C,H,W], sample-major
  return x.unsqueeze(1).expand({-1, m, -1, -1, -1}).reshape({-1, x.size(1), x.size(2), x.size(3)});
}

torch::Tensor fold_steps(const torch::Tensor& x, int m) {
  return x.reshape({-1, m, x.size(1), x.size(2), x.size(3)});
}

torch::Tensor flatten_steps(const torch::Tensor& x) {
  return x.reshape({-1, x.size(2), x.size(3), x.size(4)});
}

void require_pair(const FeatureMap& a, const FeatureMap& b) {
  if (a.level() != b.level() || a.tensor().sizes() != b.tensor().sizes()) {
    throw ShapeError("anchor and reference features differ: " + shape_string(a.tensor()) + " vs " +
                     shape_string(b.tensor()));
  }
}

}  // namespace

FeatureMap ForecastState::global_at(int step, int level) const { return slice_step(global, m, step, level); }

FeatureMap ForecastState::forecast(int step, int level) const { return slice_step(refined, m, step, level); }

FeaturePyramid ForecastState::pyramid(int step) const {
  FeaturePyramid p;
  for (int l = 1; l <= static_cast<int>(refined.size()); ++l) p.levels.push_back(forecast(step, l));
  p.base_channels = static_cast<int>(p.levels.front().channels());
  return p;
}

GlobalDecoderImpl::GlobalDecoderImpl(int64_t channels, int m) : m_(m) {
  c1_ = register_module("conv1", conv(2 * channels, channels));
  c2_ = register_module("conv2", conv(channels, channels));
  fc_ = register_module("fc", torch::nn::Linear(channels, 6 * m));
  torch::NoGradGuard guard;
  fc_->weight.zero_();
  fc_->bias.copy_(AffineParams::identity(m).tensor().reshape({-1}));
}

torch::Tensor GlobalDecoderImpl::forward(const torch::Tensor& anchor, const torch::Tensor& reference) {
  auto h = leaky(c1_(torch::cat({anchor, reference}, 1)));
  h = leaky(c2_(h));
  return fc_(h.mean({2, 3})).view({-1, m_, 2, 3});
}

LocalDecoderImpl::LocalDecoderImpl(int64_t channels, int64_t coarser_channels) {
  int64_t in = 3 * channels;
  if (coarser_channels > 0) {
    up_ = register_module("up", torch::nn::ConvTranspose2d(
                                    torch::nn::ConvTranspose2dOptions(coarser_channels, channels, 4)
                                        .stride(2)
                                        .padding(1)));
    in += channels;
  }
  block_ = register_module("dense", DenseBlock(in, channels, channels));
}

torch::Tensor LocalDecoderImpl::forward(const torch::Tensor& global, const torch::Tensor& anchor,
                                        const torch::Tensor& reference,
                                        const std::optional<torch::Tensor>& coarser) {
  std::vector<torch::Tensor> inputs{global, anchor, reference};
  if (has_coarser_input()) {
    if (!coarser) throw ShapeError("local decoder: coarser forecast required below the coarsest level");
    inputs.push_back(leaky(up_(*coarser)));
  }
  return global + block_(torch::cat(inputs, 1));
}

torch::Tensor global_forecast(const torch::Tensor& anchor, const torch::Tensor& thetas) {
  const int m = static_cast<int>(thetas.size(1));
  auto warped = numerics::affine_transform(repeat_steps(anchor, m), thetas.reshape({-1, 2, 3}));
  return fold_steps(warped, m);
}

std::vector<FeatureMap> global_forecast(const FeatureMap& anchor, const std::vector<AffineParams>& thetas) {
  std::vector<FeatureMap> out;
  out.reserve(thetas.size());
  for (const auto& theta : thetas) out.push_back(numerics::affine_transform(anchor, theta));
  return out;
}

M2FNetImpl::M2FNetImpl(const EncoderConfig& enc, PropagationConfig cfg) : enc_(enc), cfg_(cfg) {
  enc_.validate();
  cfg_.validate();
  for (int l = 1; l <= kPyramidLevels; ++l) {
    const auto c = enc_.channels_at(l);
    const auto coarser = l == kPyramidLevels ? 0 : enc_.channels_at(l + 1);
    global_.push_back(register_module("global" + std::to_string(l), GlobalDecoder(c, cfg_.m)));
    local_.push_back(register_module("local" + std::to_string(l), LocalDecoder(c, coarser)));
  }
}

void M2FNetImpl::set_ablation(bool enable_global, bool enable_local) {
  PropagationConfig next = cfg_;
  next.enable_global = enable_global;
  next.enable_local = enable_local;
  next.validate();
  cfg_ = next;
}

std::vector<AffineParams> M2FNetImpl::decode_global(const FeatureMap& anchor, const FeatureMap& reference) {
  require_pair(anchor, reference);
  auto thetas = global_[anchor.level() - 1](anchor.tensor(), reference.tensor());
  std::vector<AffineParams> out;
  for (int i = 0; i < cfg_.m; ++i) out.emplace_back(thetas.select(1, i));
  return out;
}

FeatureMap M2FNetImpl::local_refine(const FeatureMap& global, const FeatureMap& anchor, const FeatureMap& reference,
                                    const std::optional<FeatureMap>& coarser) {
  require_pair(anchor, reference);
  require_pair(global, anchor);
  if (!cfg_.enable_local) return global;
  std::optional<torch::Tensor> c;
  if (coarser) {
    if (coarser->level() != anchor.level() + 1) throw ShapeError("local decoder: coarser forecast at wrong level");
    c = coarser->tensor();
  }
  return FeatureMap(local_[anchor.level() - 1](global.tensor(), anchor.tensor(), reference.tensor(), c),
                    anchor.level());
}

ForecastState M2FNetImpl::forward(const FeaturePyramid& anchor, const FeaturePyramid& reference) {
  if (anchor.levels.size() != static_cast<size_t>(kPyramidLevels) ||
      reference.levels.size() != anchor.levels.size()) {
    throw ShapeError("M2FNet expects two full feature pyramids");
  }
  const int m = cfg_.m;
  ForecastState state;
  state.m = m;
  state.global.resize(kPyramidLevels);
  state.refined.resize(kPyramidLevels);
  state.thetas.resize(kPyramidLevels);

  std::optional<torch::Tensor> coarser;
  for (int l = kPyramidLevels; l >= 1; --l) {
    const auto& a = anchor.at(l);
    const auto& r = reference.at(l);
    require_pair(anchor.level(l), reference.level(l));
    const auto n = a.size(0);

    torch::Tensor thetas = cfg_.enable_global
                               ? global_[l - 1](a, r)
                               : AffineParams::identity(n * m, a.options()).tensor().view({n, m, 2, 3});
    torch::Tensor global = cfg_.enable_global ? flatten_steps(global_forecast(a, thetas)) : repeat_steps(a, m);

    torch::Tensor refined = global;
    if (cfg_.enable_local) {
      refined = local_[l - 1](global, repeat_steps(a, m), repeat_steps(r, m), coarser);
    }
    state.thetas[l - 1] = thetas;
    state.global[l - 1] = fold_steps(global, m);
    state.refined[l - 1] = fold_steps(refined, m);
    coarser = refined;
  }
  return state;
}

}  // namespace pinet
