#include "pinet/inet.hpp"

#include "pinet/numerics.hpp"

namespace pinet {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

namespace {

constexpr int64_t kUNetStages = 5;
constexpr int64_t kUNetAlignment = int64_t{1} << kUNetStages;

// Replicate-pads [N,C,H,W] so both sides are multiples of the U-net alignment.
torch::Tensor pad_to_alignment(const torch::Tensor& x) {
  const auto ph = (kUNetAlignment - x.size(2) % kUNetAlignment) % kUNetAlignment;
  const auto pw = (kUNetAlignment - x.size(3) % kUNetAlignment) % kUNetAlignment;
  if (ph == 0 && pw == 0) return x;
  return F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
}

torch::Tensor crop_to(const torch::Tensor& x, int64_t h, int64_t w) {
  return x.index({Slice(), Slice(), Slice(0, h), Slice(0, w)});
}

}  // namespace

void INetConfig::validate() const {
  if (width < 1) throw ConfigError("inet.width must be >= 1");
  if (!(visibility_eps > 0.0 && visibility_eps < 0.5)) throw ConfigError("inet.visibility_eps must lie in (0,0.5)");
}

UNetImpl::UNetImpl(int64_t in, int64_t out, int64_t width) {
  conv1_ = register_module("conv1", conv(in, width, 7));
  conv2_ = register_module("conv2", conv(width, width, 7));
  const std::vector<int64_t> widths{width, 2 * width, 4 * width, 8 * width, 16 * width, 16 * width};
  for (int64_t s = 0; s < kUNetStages; ++s) {
    const int64_t k = s == 0 ? 5 : 3;
    auto a = register_module("down" + std::to_string(s + 1) + "_a", conv(widths[s], widths[s + 1], k));
    auto b = register_module("down" + std::to_string(s + 1) + "_b", conv(widths[s + 1], widths[s + 1], k));
    down_.emplace_back(a, b);
  }
  for (int64_t s = kUNetStages; s > 0; --s) {
    const auto idx = std::to_string(kUNetStages - s + 1);
    auto a = register_module("up" + idx + "_a", conv(widths[s], widths[s - 1]));
    auto b = register_module("up" + idx + "_b", conv(2 * widths[s - 1], widths[s - 1]));
    up_.emplace_back(a, b);
  }
  conv3_ = register_module("conv3", conv(width, out));
  zero_init(conv3_);
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x) {
  if (x.size(2) % kUNetAlignment != 0 || x.size(3) % kUNetAlignment != 0) {
    throw ShapeError("U-net input sides must be multiples of 32, got " + shape_string(x));
  }
  std::vector<torch::Tensor> skips;
  auto h = leaky(conv1_(x));
  h = leaky(conv2_(h));
  for (auto& [a, b] : down_) {
    skips.push_back(h);
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
    h = leaky(a(h));
    h = leaky(b(h));
  }
  for (auto& [a, b] : up_) {
    h = leaky(a(numerics::upsample2x(h)));
    h = leaky(b(torch::cat({h, skips.back()}, 1)));
    skips.pop_back();
  }
  return conv3_(h);
}

std::pair<torch::Tensor, torch::Tensor> intermediate_flows(const torch::Tensor& flow01, const torch::Tensor& flow10,
                                                           double tau) {
  auto to0 = flow01 * (-(1.0 - tau) * tau) + flow10 * (tau * tau);
  auto to1 = flow01 * ((1.0 - tau) * (1.0 - tau)) - flow10 * (tau * (1.0 - tau));
  return {to0, to1};
}

void InterpolationRequest::validate() const {
  if (left.tensor().sizes() != right.tensor().sizes()) throw ShapeError("interpolation inputs differ in size");
  double prev = 0.0;
  for (double t : times) {
    if (!(t > 0.0 && t < 1.0)) throw std::domain_error("interpolation time must lie strictly in (0,1)");
    if (t < prev) throw std::invalid_argument("interpolation times must be sorted ascending");
    prev = t;
  }
}

INetImpl::INetImpl(INetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  flow_net_ = register_module("flow", UNet(6, 4, cfg_.width));
  refine_net_ = register_module("refine", UNet(16, 5, cfg_.width));
}

std::pair<torch::Tensor, torch::Tensor> INetImpl::compute_bidirectional_flow(const torch::Tensor& left,
                                                                             const torch::Tensor& right) {
  if (left.sizes() != right.sizes() || left.dim() != 4 || left.size(1) != 3) {
    throw ShapeError("INet inputs must share a [N,3,H,W] shape: " + shape_string(left) + " vs " + shape_string(right));
  }
  const auto h = left.size(2), w = left.size(3);
  auto flows = crop_to(flow_net_(pad_to_alignment(torch::cat({left, right}, 1))), h, w);
  return {flows.narrow(1, 0, 2), flows.narrow(1, 2, 2)};
}

InterpolationOutput INetImpl::forward(const torch::Tensor& left, const torch::Tensor& right,
                                      const std::vector<TimeQuery>& queries) {
  auto [flow01, flow10] = compute_bidirectional_flow(left, right);
  const auto h = left.size(2), w = left.size(3);
  const auto r = static_cast<int64_t>(queries.size());

  std::vector<int64_t> samples;
  std::vector<float> a0, a1, b0, b1, taus;
  for (const auto& q : queries) {
    if (!(q.tau > 0.0 && q.tau < 1.0)) throw std::domain_error("interpolation time must lie strictly in (0,1)");
    if (q.sample < 0 || q.sample >= left.size(0)) throw std::out_of_range("interpolation query sample out of range");
    samples.push_back(q.sample);
    const double t = q.tau;
    a0.push_back(static_cast<float>(-(1.0 - t) * t));
    b0.push_back(static_cast<float>(t * t));
    a1.push_back(static_cast<float>((1.0 - t) * (1.0 - t)));
    b1.push_back(static_cast<float>(-t * (1.0 - t)));
    taus.push_back(static_cast<float>(t));
  }
  auto coef = [&](const std::vector<float>& v) { return torch::tensor(v, left.options()).view({r, 1, 1, 1}); };
  auto sel = torch::tensor(samples, torch::TensorOptions().dtype(torch::kLong));
  auto i0 = left.index_select(0, sel), i1 = right.index_select(0, sel);
  auto f01 = flow01.index_select(0, sel), f10 = flow10.index_select(0, sel);

  auto approx_t0 = coef(a0) * f01 + coef(b0) * f10;
  auto approx_t1 = coef(a1) * f01 + coef(b1) * f10;
  auto g0 = numerics::backwarp(i0, approx_t0);
  auto g1 = numerics::backwarp(i1, approx_t1);

  auto refined = crop_to(refine_net_(pad_to_alignment(torch::cat({i0, i1, approx_t0, approx_t1, g0, g1}, 1))), h, w);
  InterpolationOutput out;
  out.flow01 = flow01;
  out.flow10 = flow10;
  out.flow_t0 = approx_t0 + refined.narrow(1, 0, 2);
  out.flow_t1 = approx_t1 + refined.narrow(1, 2, 2);
  out.visibility0 = torch::sigmoid(refined.narrow(1, 4, 1)).clamp(cfg_.visibility_eps, 1.0 - cfg_.visibility_eps);
  auto v1 = 1.0 - out.visibility0;

  auto w0 = (1.0 - coef(taus)) * out.visibility0;
  auto w1 = coef(taus) * v1;
  auto warped0 = numerics::backwarp(i0, out.flow_t0);
  auto warped1 = numerics::backwarp(i1, out.flow_t1);
  out.frames = ((w0 * warped0 + w1 * warped1) / (w0 + w1)).clamp(0.0, 1.0);
  return out;
}

std::vector<Frame> INetImpl::interpolate_at(const InterpolationRequest& req) {
  req.validate();
  std::vector<TimeQuery> queries;
  for (double t : req.times) queries.push_back({0, t});
  auto out = forward(req.left.batched(), req.right.batched(), queries);
  std::vector<Frame> frames;
  for (int64_t k = 0; k < out.frames.size(0); ++k) frames.push_back(Frame::clamped(out.frames[k].detach()));
  return frames;
}

}  // namespace pinet
