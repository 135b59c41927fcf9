#include "pinet/train_eval.hpp"

#include "pinet/numerics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace pinet {

using torch::indexing::Slice;

void ModelConfig::validate() const {
  pnet.validate();
  inet.validate();
  schedule.validate();
  if (pnet.propagation.m > schedule.M) {
    throw ConfigError("propagation.m=" + std::to_string(pnet.propagation.m) + " exceeds schedule.M=" +
                      std::to_string(schedule.M));
  }
}

PINetImpl::PINetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  pnet = register_module("pnet", PNet(cfg_.pnet));
  inet = register_module("inet", INet(cfg_.inet));
}

PINet make_model(const ModelConfig& cfg, std::uint64_t seed) {
  torch::manual_seed(seed);
  return PINet(cfg);
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (lr <= 0.0) throw ConfigError("train.lr must be positive");
  if (gamma <= 0.0) throw ConfigError("train.gamma must be positive");
  for (size_t k = 0; k < milestones.size(); ++k) {
    if (milestones[k] <= 0 || (k > 0 && milestones[k] <= milestones[k - 1])) {
      throw ConfigError("train.milestones must be positive and strictly increasing");
    }
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam betas must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be nonnegative");
  if (batch <= 0) throw ConfigError("train.batch must be positive");
  if (staged_epochs < 0) throw ConfigError("train.staged_epochs must be nonnegative");
  if (warmup_epochs < 0) throw ConfigError("train.warmup_epochs must be nonnegative");
  if (keep_checkpoints < 0) throw ConfigError("train.keep_checkpoints must be nonnegative");
  weights.validate();
  sampling.validate();
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0," + std::to_string(cfg.epochs) + ")");
  }
  double lr = cfg.lr;
  for (int m : cfg.milestones) {
    if (epoch >= m) lr *= cfg.gamma;
  }
  const int joint = epoch - cfg.staged_epochs;
  if (joint >= 0 && joint < cfg.warmup_epochs) lr *= double(joint + 1) / (cfg.warmup_epochs + 1);
  return lr;
}

std::array<double, 3> lambdas_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::out_of_range("lambdas_at: negative epoch");
  if (epoch < cfg.staged_epochs) return {cfg.weights.lambda1, 0.0, 0.0};
  return {cfg.weights.lambda1, cfg.weights.lambda2, cfg.weights.lambda3};
}

std::array<double, 3> lambdas_at(int epoch) { return lambdas_at(epoch, TrainConfig{}); }

// Losses -------------------------------------------------------------------------

namespace {

torch::Tensor stack_frames(const std::vector<data::TrainingItem>& items, const std::vector<int>& timestamps_fwd,
                           bool mirrored) {
  // [B,T,3,H,W]; mirrored maps timestamp t to n - t.
  std::vector<torch::Tensor> per_item;
  for (const auto& item : items) {
    std::vector<torch::Tensor> ts;
    for (int t : timestamps_fwd) ts.push_back(item.at(mirrored ? item.n - t : t).tensor());
    per_item.push_back(torch::stack(ts, 0));
  }
  return torch::stack(per_item, 0);
}

torch::Tensor oracle_batch(const std::vector<data::TrainingItem>& items, int src, int dst, bool mirrored) {
  std::vector<torch::Tensor> flows;
  for (const auto& item : items) {
    const int a = mirrored ? item.n - src : src;
    const int b = mirrored ? item.n - dst : dst;
    auto f = item.oracle_flow(a, b);
    if (!f) throw std::invalid_argument("motion supervision needs flow oracles for every training clip");
    flows.push_back(f->tensor());
  }
  return torch::cat(flows, 0);
}

std::vector<torch::Tensor> flow_pyramid(torch::Tensor finest, int levels) {
  std::vector<torch::Tensor> out{std::move(finest)};
  for (int l = 2; l <= levels; ++l) out.push_back(numerics::downsample_flow(out.back()));
  return out;
}

struct GroupLoss {
  torch::Tensor m2fnet, pnet, gdl, inet;
};

GroupLoss propagation_group_loss(PINet& model, const std::vector<data::TrainingItem>& items,
                                 const std::array<double, 3>& lambdas, const TrainConfig& cfg) {
  const auto& mc = model->config();
  const int n = items.front().n;
  const int m = mc.pnet.propagation.m;
  const auto batch = static_cast<int64_t>(items.size());
  GroupLoss out;

  std::vector<torch::Tensor> firsts, lasts;
  for (const auto& item : items) {
    firsts.push_back(item.first.tensor());
    lasts.push_back(item.last.tensor());
  }
  auto first = torch::stack(firsts, 0), last = torch::stack(lasts, 0);
  // Forward samples first, then the mirrored backward samples; one network call covers both.
  auto anchor = torch::cat({first, last}, 0);
  auto reference = torch::cat({last, first}, 0);
  const bool decode = lambdas[1] > 0.0 || lambdas[2] > 0.0;
  auto res = model->pnet->forward(anchor, reference, n, Direction::forward, decode);

  if (lambdas[0] > 0.0 && !cfg.toggles.no_m2fnet_loss) {
    PairFlows estimated, oracle;
    for (const auto& p : supervised_pairs(res.schedule, cfg.toggles)) {
      const auto k = static_cast<int64_t>(res.schedule.index_of(p.src, p.dst));
      std::vector<torch::Tensor> est;
      for (const auto& level : res.pair_flows) est.push_back(level[k]);
      estimated[{p.src, p.dst}] = std::move(est);
      auto gt = torch::cat({oracle_batch(items, p.src, p.dst, false), oracle_batch(items, p.src, p.dst, true)}, 0);
      oracle[{p.src, p.dst}] = flow_pyramid(gt, static_cast<int>(res.pair_flows.size()));
    }
    out.m2fnet = flow_loss(estimated, oracle, cfg.weights);
  }

  std::vector<int> steps(static_cast<size_t>(m));
  std::iota(steps.begin(), steps.end(), 1);
  if (lambdas[1] > 0.0) {
    auto gt = torch::cat({stack_frames(items, steps, false), stack_frames(items, steps, true)}, 0);
    auto gt_levels = frame_pyramid(gt.flatten(0, 1), static_cast<int>(res.frames.size()));
    std::vector<torch::Tensor> pred;
    for (const auto& level : res.frames) pred.push_back(level.flatten(0, 1));
    // pnet_loss averages over the flattened frames; the objective sums over the m steps.
    auto loss = pnet_loss(pred, gt_levels, cfg.weights, !cfg.toggles.no_gdl);
    out.pnet = loss.total() * m;
    out.gdl = loss.gdl * m;
  }

  if (lambdas[2] > 0.0) {
    const int d = delta_t(n, mc.schedule);
    if (d > m) throw ConfigError("training gap needs " + std::to_string(d) + " propagated steps, m=" + std::to_string(m));
    std::vector<TimeQuery> queries;
    std::vector<torch::Tensor> targets;
    for (int64_t b = 0; b < batch; ++b) {
      for (int i = d + 1; i < n - d; ++i) {
        queries.push_back({b, bridge_tau(n, i, d)});
        targets.push_back(items[static_cast<size_t>(b)].at(i).tensor());
      }
    }
    if (!queries.empty()) {
      auto left = res.frames[0].index({Slice(0, batch), d - 1}).clamp(0.0, 1.0);
      auto right = res.frames[0].index({Slice(batch, 2 * batch), d - 1}).clamp(0.0, 1.0);
      auto inet_out = model->inet->forward(left, right, queries);
      out.inet = inet_loss(inet_out, left, right, torch::stack(targets, 0), queries, cfg.inet_weights);
    }
  }
  return out;
}

GroupLoss interpolation_group_loss(PINet& model, const std::vector<data::TrainingItem>& items,
                                   const std::array<double, 3>& lambdas, const TrainConfig& cfg) {
  GroupLoss out;
  if (lambdas[2] <= 0.0) return out;
  std::vector<torch::Tensor> firsts, lasts, targets;
  std::vector<TimeQuery> queries;
  for (size_t b = 0; b < items.size(); ++b) {
    const auto& item = items[b];
    firsts.push_back(item.first.tensor());
    lasts.push_back(item.last.tensor());
    for (int i = 1; i < item.n; ++i) {
      queries.push_back({static_cast<int64_t>(b), static_cast<double>(i) / item.n});
      targets.push_back(item.at(i).tensor());
    }
  }
  if (queries.empty()) return out;
  auto left = torch::stack(firsts, 0), right = torch::stack(lasts, 0);
  auto inet_out = model->inet->forward(left, right, queries);
  out.inet = inet_loss(inet_out, left, right, torch::stack(targets, 0), queries, cfg.inet_weights);
  return out;
}

double value_of(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

std::pair<torch::Tensor, LossBreakdown> batch_loss(PINet& model, const std::vector<data::TrainingItem>& batch,
                                                   const std::array<double, 3>& lambdas, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::map<int, std::vector<data::TrainingItem>> groups;
  for (const auto& item : batch) groups[item.n].push_back(item);

  LossBreakdown parts;
  parts.lambda1 = lambdas[0];
  parts.lambda2 = lambdas[1];
  parts.lambda3 = lambdas[2];
  torch::Tensor total;
  auto accumulate = [&](const torch::Tensor& term, double lambda, double weight, double& slot) {
    if (!term.defined()) return;
    slot += weight * term.item<double>();
    auto t = term * (lambda * weight);
    total = total.defined() ? total + t : t;
  };
  for (const auto& [n, items] : groups) {
    const double weight = static_cast<double>(items.size()) / static_cast<double>(batch.size());
    auto g = n > model->config().schedule.M ? propagation_group_loss(model, items, lambdas, cfg)
                                             : interpolation_group_loss(model, items, lambdas, cfg);
    accumulate(g.m2fnet, lambdas[0], weight, parts.l_m2fnet);
    accumulate(g.pnet, lambdas[1], weight, parts.l_pnet);
    accumulate(g.inet, lambdas[2], weight, parts.l_inet);
    parts.l_gdl += weight * value_of(g.gdl);
  }
  parts.l_total = total_loss(parts, lambdas[0], lambdas[1], lambdas[2]);
  return {total, parts};
}

// Trainer --------------------------------------------------------------------------

Trainer::Trainer(PINet model, TrainConfig cfg) : model_(std::move(model)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
  torch::optim::AdamOptions opts(cfg_.lr);
  opts.betas({cfg_.beta1, cfg_.beta2}).weight_decay(cfg_.weight_decay);
  optimizer_ = std::make_unique<torch::optim::Adam>(model_->parameters(), opts);
}

StepReport Trainer::step(const std::vector<data::TrainingItem>& batch, int epoch) {
  StepReport report;
  report.epoch = epoch;
  report.iteration = iteration_++;
  report.lr = lr_at(epoch, cfg_);
  for (auto& group : optimizer_->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(report.lr);

  model_->train();
  optimizer_->zero_grad(true);
  auto [total, parts] = batch_loss(model_, batch, lambdas_at(epoch, cfg_), cfg_);
  report.loss = parts;
  if (total.defined() && total.requires_grad()) {
    total.backward();
    optimizer_->step();
  }
  return report;
}

std::vector<StepReport> Trainer::run_epoch(const std::vector<data::ClipSource>& clips, int epoch,
                                           const std::function<void(const StepReport&)>& on_step) {
  std::vector<size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<StepReport> reports;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg_.batch)) {
    std::vector<data::TrainingItem> batch;
    for (size_t k = start; k < std::min(order.size(), start + static_cast<size_t>(cfg_.batch)); ++k) {
      const auto& src = clips[order[k]];
      batch.push_back(data::sample_training_item(src.clip, rng_(), cfg_.sampling, src.oracle));
    }
    reports.push_back(step(batch, epoch));
    if (on_step) on_step(reports.back());
  }
  return reports;
}

std::string Trainer::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void Trainer::set_rng_state(const std::string& state) {
  std::istringstream is(state);
  is >> rng_;
  if (!is) throw ParseError("invalid rng state");
}

// Evaluation -------------------------------------------------------------------------

double TimestepTable::range() const {
  if (psnr.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(psnr.begin(), psnr.end());
  return *hi - *lo;
}

double TimestepTable::mean_psnr() const {
  return psnr.empty() ? 0.0 : std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size());
}

double TimestepTable::mean_ssim() const {
  return ssim.empty() ? 0.0 : std::accumulate(ssim.begin(), ssim.end(), 0.0) / static_cast<double>(ssim.size());
}

namespace {

void require_length(const std::vector<data::Clip>& clips, int n) {
  if (clips.empty()) throw std::invalid_argument("evaluation needs at least one clip");
  for (const auto& c : clips) {
    if (c.length() < n + 1) {
      throw std::invalid_argument("clip '" + c.id + "' has " + std::to_string(c.length()) + " frames, gap " +
                                  std::to_string(n) + " needs " + std::to_string(n + 1));
    }
  }
}

}  // namespace

TimestepTable evaluate_timesteps(PINet& model, const std::vector<data::Clip>& clips, int n) {
  if (n < 2) throw std::invalid_argument("evaluate_timesteps: gap must be at least 2");
  require_length(clips, n);
  model->eval();
  TimestepTable table;
  table.n = n;
  table.psnr.assign(static_cast<size_t>(n - 1), 0.0);
  table.ssim.assign(static_cast<size_t>(n - 1), 0.0);
  std::vector<int> targets(static_cast<size_t>(n - 1));
  std::iota(targets.begin(), targets.end(), 1);
  for (const auto& clip : clips) {
    auto frames = run_pinet(model->pnet, model->inet, clip.frames.front(), clip.frames[static_cast<size_t>(n)], n,
                            targets, model->config().schedule);
    for (int i = 1; i < n; ++i) {
      const auto& gt = clip.frames[static_cast<size_t>(i)];
      table.psnr[static_cast<size_t>(i - 1)] += numerics::psnr(frames[static_cast<size_t>(i - 1)], gt);
      table.ssim[static_cast<size_t>(i - 1)] += numerics::ssim(frames[static_cast<size_t>(i - 1)], gt);
    }
  }
  for (auto& v : table.psnr) v /= static_cast<double>(clips.size());
  for (auto& v : table.ssim) v /= static_cast<double>(clips.size());
  return table;
}

namespace {

// Mean finest |f_{i->0}| per step for one propagation.
std::vector<double> anchor_magnitudes(const PropagationResult& res) {
  std::vector<double> out;
  for (int i = 1; i <= res.m(); ++i) {
    const torch::Tensor f = res.flow(i, 0).finest().tensor();
    out.push_back(torch::linalg_vector_norm(f, 2, {1}).mean().item<double>());
  }
  return out;
}

}  // namespace

std::vector<double> anchor_flow_magnitudes(PINet& model, const std::vector<data::Clip>& clips, int n) {
  require_length(clips, n);
  model->eval();
  torch::NoGradGuard no_grad;
  std::vector<double> acc(static_cast<size_t>(model->config().pnet.propagation.m), 0.0);
  for (const auto& clip : clips) {
    auto res = model->pnet->forward(clip.frames.front().batched(), clip.frames[static_cast<size_t>(n)].batched(), n,
                                    Direction::forward, false);
    auto mags = anchor_magnitudes(res);
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += mags[k];
  }
  for (auto& v : acc) v /= static_cast<double>(clips.size());
  return acc;
}

Heatmap flow_heatmap(PINet& model, const std::vector<data::Clip>& clips, const std::vector<int>& gaps) {
  const int m = model->config().pnet.propagation.m;
  model->eval();
  torch::NoGradGuard no_grad;
  Heatmap out;
  out.gaps = gaps;
  out.raw.assign(static_cast<size_t>(m), std::vector<double>(gaps.size(), 0.0));
  for (size_t g = 0; g < gaps.size(); ++g) {
    const int n = gaps[g];
    if (n <= m) throw RoutingError("flow_heatmap: gap " + std::to_string(n) + " does not exceed m=" + std::to_string(m));
    require_length(clips, n);
    for (const auto& clip : clips) {
      const auto& left = clip.frames.front();
      const auto& right = clip.frames[static_cast<size_t>(n)];
      auto fwd = anchor_magnitudes(model->pnet->forward(left.batched(), right.batched(), n, Direction::forward, false));
      auto bwd = anchor_magnitudes(model->pnet->forward(right.batched(), left.batched(), n, Direction::backward, false));
      for (int i = 0; i < m; ++i) {
        out.raw[static_cast<size_t>(i)][g] += 0.5 * (fwd[static_cast<size_t>(i)] + bwd[static_cast<size_t>(i)]) /
                                              static_cast<double>(clips.size());
      }
    }
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : out.raw) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  out.scaled = out.raw;
  for (auto& row : out.scaled) {
    for (auto& v : row) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  }
  return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace pinet
