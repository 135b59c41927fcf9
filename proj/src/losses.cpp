#include "pinet/losses.hpp"

#include "pinet/numerics.hpp"

namespace pinet {

using torch::indexing::Slice;

void LossWeights::validate() const {
  for (double w : flow_omega) {
    if (w < 0.0) throw ConfigError("loss weights must be nonnegative");
  }
  for (double w : frame_omega) {
    if (w < 0.0) throw ConfigError("loss weights must be nonnegative");
  }
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) throw ConfigError("loss lambdas must be nonnegative");
}

std::vector<FlowPair> supervised_pairs(const FlowPairSchedule& schedule, const LossToggles& toggles) {
  std::vector<FlowPair> out;
  if (toggles.no_m2fnet_loss) return out;
  for (const auto& p : schedule.pairs) {
    if (p.tag == FlowTag::interframe && toggles.no_interframe_motion) continue;
    if (p.tag == FlowTag::direction && toggles.no_direction_supervision) continue;
    out.push_back(p);
  }
  return out;
}

namespace {

std::string pair_name(const std::pair<int, int>& key) {
  return std::to_string(key.first) + "->" + std::to_string(key.second);
}

}  // namespace

torch::Tensor flow_loss(const PairFlows& estimated, const PairFlows& oracle, const LossWeights& w) {
  for (const auto& [key, _] : oracle) {
    if (!estimated.count(key)) throw std::invalid_argument("flow_loss: oracle pair " + pair_name(key) + " was not estimated");
  }
  torch::Tensor total;
  for (const auto& [key, levels] : estimated) {
    auto it = oracle.find(key);
    if (it == oracle.end()) throw std::invalid_argument("flow_loss: no oracle flow for pair " + pair_name(key));
    const auto& target = it->second;
    if (target.size() != levels.size() || levels.size() > static_cast<size_t>(kPyramidLevels)) {
      throw ShapeError("flow_loss: level count mismatch for pair " + pair_name(key));
    }
    for (size_t l = 0; l < levels.size(); ++l) {
      if (levels[l].sizes() != target[l].sizes()) {
        throw ShapeError("flow_loss: pair " + pair_name(key) + " level " + std::to_string(l + 1) + " shapes " +
                         shape_string(levels[l]) + " vs " + shape_string(target[l]));
      }
      auto epe = torch::linalg_vector_norm(levels[l] - target[l], 2, {1}).mean();
      auto term = epe * w.flow_omega[l];
      total = total.defined() ? total + term : term;
    }
  }
  if (!total.defined()) return torch::zeros({});
  return total;
}

torch::Tensor gdl(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes() || pred.dim() < 2) {
    throw ShapeError("gdl: shapes differ " + shape_string(pred) + " vs " + shape_string(gt));
  }
  auto dx = [](const torch::Tensor& t) {
    return (t.index({"...", Slice(), Slice(1, torch::indexing::None)}) -
            t.index({"...", Slice(), Slice(torch::indexing::None, -1)}))
        .abs();
  };
  auto dy = [](const torch::Tensor& t) {
    return (t.index({"...", Slice(1, torch::indexing::None), Slice()}) -
            t.index({"...", Slice(torch::indexing::None, -1), Slice()}))
        .abs();
  };
  return (dx(gt) - dx(pred)).abs().mean() + (dy(gt) - dy(pred)).abs().mean();
}

double gdl(const Frame& pred, const Frame& gt) { return gdl(pred.tensor(), gt.tensor()).item<double>(); }

std::vector<torch::Tensor> frame_pyramid(const torch::Tensor& frames, int levels) {
  std::vector<torch::Tensor> out{frames};
  for (int l = 2; l <= levels; ++l) out.push_back(numerics::downsample2x(out.back()));
  return out;
}

PNetLoss pnet_loss(const std::vector<torch::Tensor>& pred, const std::vector<torch::Tensor>& gt, const LossWeights& w,
                   bool use_gdl) {
  if (pred.size() != gt.size() || pred.empty() || pred.size() > static_cast<size_t>(kPyramidLevels)) {
    throw ShapeError("pnet_loss: level count mismatch");
  }
  PNetLoss out;
  for (size_t l = 0; l < pred.size(); ++l) {
    if (pred[l].sizes() != gt[l].sizes()) {
      throw ShapeError("pnet_loss: level " + std::to_string(l + 1) + " shapes " + shape_string(pred[l]) + " vs " +
                       shape_string(gt[l]));
    }
    auto term = (pred[l] - gt[l]).abs().mean() * w.frame_omega[l];
    out.photometric = out.photometric.defined() ? out.photometric + term : term;
  }
  out.gdl = use_gdl ? gdl(pred.front(), gt.front()) : torch::zeros({}, pred.front().options());
  return out;
}

torch::Tensor inet_loss(const InterpolationOutput& out, const torch::Tensor& left, const torch::Tensor& right,
                        const torch::Tensor& targets, const std::vector<TimeQuery>& queries,
                        const INetLossWeights& w) {
  if (targets.sizes() != out.frames.sizes()) {
    throw ShapeError("inet_loss: targets " + shape_string(targets) + " vs outputs " + shape_string(out.frames));
  }
  std::vector<int64_t> samples;
  for (const auto& q : queries) samples.push_back(q.sample);
  auto sel = torch::tensor(samples, torch::TensorOptions().dtype(torch::kLong));
  auto i0 = left.index_select(0, sel);
  auto i1 = right.index_select(0, sel);

  auto reconstruction = (out.frames - targets).abs().mean();
  auto warping = (left - numerics::backwarp(right, out.flow01)).abs().mean() +
                 (right - numerics::backwarp(left, out.flow10)).abs().mean() +
                 (targets - numerics::backwarp(i0, out.flow_t0)).abs().mean() +
                 (targets - numerics::backwarp(i1, out.flow_t1)).abs().mean();
  auto smooth = [](const torch::Tensor& f) {
    return (f.index({"...", Slice(), Slice(1, torch::indexing::None)}) -
            f.index({"...", Slice(), Slice(torch::indexing::None, -1)}))
               .abs()
               .mean() +
           (f.index({"...", Slice(1, torch::indexing::None), Slice()}) -
            f.index({"...", Slice(torch::indexing::None, -1), Slice()}))
               .abs()
               .mean();
  };
  auto smoothness = smooth(out.flow01) + smooth(out.flow10);
  return reconstruction * w.reconstruction + warping * w.warping + smoothness * w.smoothness +
         gdl(out.frames, targets) * w.gdl;
}

double total_loss(const LossBreakdown& parts, double lambda1, double lambda2, double lambda3) {
  return lambda1 * parts.l_m2fnet + lambda2 * parts.l_pnet + lambda3 * parts.l_inet;
}

}  // namespace pinet
