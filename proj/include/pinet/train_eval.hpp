#pragma once

#include "pinet/data.hpp"
#include "pinet/inet.hpp"
#include "pinet/losses.hpp"
#include "pinet/pnet.hpp"
#include "pinet/scheduler.hpp"

#include <array>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace pinet {

struct ModelConfig {
  PNetConfig pnet;
  INetConfig inet;
  ScheduleConfig schedule;

  /// Also requires m <= M so every routed propagation has n > m.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Propagation and interpolation networks trained together.
class PINetImpl : public torch::nn::Module {
 public:
  explicit PINetImpl(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  PNet pnet{nullptr};
  INet inet{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(PINet);

/// Seeds torch's generator and builds the model, so equal seeds give equal weights.
PINet make_model(const ModelConfig& cfg, std::uint64_t seed);

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-4;
  std::vector<int> milestones{100, 150, 175};
  double gamma = 0.5;  ///< lr factor applied at each milestone
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 4e-4;  ///< coupled (added to the gradient)
  int batch = 4;
  int staged_epochs = 40;  ///< epochs training the motion objective only
  int warmup_epochs = 0;   ///< linear lr ramp at the start of the joint phase
  std::uint64_t seed = 0;
  int keep_checkpoints = 0;  ///< most recent epoch checkpoints kept on disk, 0 keeps all
  LossWeights weights;
  LossToggles toggles;
  INetLossWeights inet_weights;
  data::SamplingConfig sampling;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Step schedule: lr * gamma^(milestones passed), scaled by (k+1)/(warmup_epochs+1)
/// on joint epoch k < warmup_epochs. Throws std::out_of_range outside [0, epochs).
double lr_at(int epoch, const TrainConfig& cfg);

/// (lambda1, 0, 0) before staged_epochs, (lambda1, lambda2, lambda3) after.
std::array<double, 3> lambdas_at(int epoch, const TrainConfig& cfg);
std::array<double, 3> lambdas_at(int epoch);

struct StepReport {
  int epoch = 0;
  int iteration = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

class Trainer {
 public:
  Trainer(PINet model, TrainConfig cfg);

  /// One optimizer step on a batch. Items are grouped by gap; losses with a zero
  /// lambda are not computed, so their networks receive no gradient at all.
  StepReport step(const std::vector<data::TrainingItem>& batch, int epoch);

  /// One pass over `clips` in a seeded shuffled order.
  std::vector<StepReport> run_epoch(const std::vector<data::ClipSource>& clips, int epoch,
                                    const std::function<void(const StepReport&)>& on_step = {});

  std::string rng_state() const;
  void set_rng_state(const std::string& state);

  PINet& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  int iterations() const { return iteration_; }

 private:
  PINet model_;
  TrainConfig cfg_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::mt19937_64 rng_;
  int iteration_ = 0;
};

/// Summed, batch-weighted losses of one batch at the given lambdas; exposed for tests.
/// Returns the graph-carrying total (undefined when nothing is trainable) and the breakdown.
std::pair<torch::Tensor, LossBreakdown> batch_loss(PINet& model, const std::vector<data::TrainingItem>& batch,
                                                   const std::array<double, 3>& lambdas, const TrainConfig& cfg);

// Evaluation ---------------------------------------------------------------------

struct TimestepTable {
  int n = 0;
  std::vector<double> psnr;  ///< index i-1 for target i
  std::vector<double> ssim;

  double range() const;  ///< max - min PSNR
  double mean_psnr() const;
  double mean_ssim() const;
};

/// Single-pass prediction of all n-1 intermediates per clip through run_pinet,
/// averaged per index. Clips need at least n+1 frames; the first n+1 are used.
TimestepTable evaluate_timesteps(PINet& model, const std::vector<data::Clip>& clips, int n);

struct Heatmap {
  std::vector<int> gaps;
  std::vector<std::vector<double>> raw;     ///< raw[i-1][g], i = 1..m
  std::vector<std::vector<double>> scaled;  ///< raw rescaled to [0,1] over the whole matrix
};

/// z_i = 1/2 (mean |f_{t+i->t}| + mean |f_{t+n-i->t+n}|) from finest anchor flows of both
/// propagation directions, averaged over clips. Every gap must exceed m.
Heatmap flow_heatmap(PINet& model, const std::vector<data::Clip>& clips, const std::vector<int>& gaps);

/// Mean finest-level |f_{i->0}| over forward propagations, index i-1.
std::vector<double> anchor_flow_magnitudes(PINet& model, const std::vector<data::Clip>& clips, int n);

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace pinet
