#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdiff/adam.h"
#include "cdiff/contrastive.h"
#include "cdiff/dataset.h"
#include "cdiff/models.h"
#include "cdiff/rng.h"

namespace cdiff {

enum class Ablation { kFull, kNoContrast, kPositivesOnly };

Ablation parse_ablation(const std::string& text);
std::string to_string(Ablation a);

struct TrainConfig {
  double lambda_d = 1.0;
  double lambda_v = 1.0;
  double lambda_c = 0.1;
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::kFull;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint

  void validate() const;
};

struct LossReport {
  std::uint64_t step = 0;
  double loss_d = 0.0;
  double loss_v = 0.0;
  double loss_c = 0.0;
  double loss_total = 0.0;
};

// Normalized training windows and [0, 1]-scaled start returns.
struct WindowSet {
  std::size_t window_size = 0;
  std::vector<double> windows;   // count x window_size
  std::vector<double> targets;   // scaled v_t per window
  std::vector<std::size_t> ids;  // index into slice_windows order

  std::size_t count() const { return targets.size(); }
};

WindowSet make_window_set(const OfflineDataset& dataset, std::size_t horizon);
// Keeps windows whose scaled start return is >= threshold.
WindowSet filter_high_return(const WindowSet& set, double threshold);

struct Batch {
  std::vector<double> windows;  // batch x window_size
  std::vector<double> targets;
  std::vector<std::size_t> ids;

  std::size_t size() const { return targets.size(); }
};

Batch draw_batch(const WindowSet& set, std::size_t batch_size, Rng& rng);

// Gradients of one weighted objective for every parameter block.
struct BlockGrads {
  std::vector<double> denoiser;
  std::vector<double> predictor;
  std::vector<double> projector;
};

struct LossEvaluation {
  double loss_d = 0.0;
  double loss_v = 0.0;
  double loss_c = 0.0;
  BlockGrads grads;  // of lambda_d L_d + lambda_v L_v + lambda_c L_c
};

struct LossWeights {
  double d = 1.0;
  double v = 1.0;
  double c = 1.0;
};

// L_d: mean over the batch of |tau - psi(tau^i, i)|^2, with tau^i from
// forward_sample and the first state slot conditioned on the clean state.
// L_v: mean of (J(tau^i, i) - v)^2. L_c: contrastive_loss_traj on the
// reconstructions (skipped when index is null). Draws i, the noise and the
// contrastive sets from rng in that order.
LossEvaluation evaluate_losses(const ModelBundle& models, const Batch& batch,
                               const ContrastiveIndex* index, LossWeights weights,
                               Rng& rng);

// Diffusion reconstruction loss for one clean window at step i.
double loss_d(const Mlp& denoiser, std::span<const double> window, std::size_t i,
              std::span<const double> noise, const DiffusionSchedule& schedule,
              std::size_t embed_dim);

struct OptimizerState {
  AdamState denoiser;
  AdamState predictor;
  AdamState projector;

  static OptimizerState init(const ModelBundle& models, double learning_rate);
};

// One Adam update of every block under L = lambda_d L_d + lambda_v L_v +
// lambda_c L_c. Throws NumericError with step and batch ids on a non-finite
// loss.
LossReport train_step(ModelBundle& models, OptimizerState& opt, const Batch& batch,
                      const TrainConfig& cfg, const ContrastiveIndex* index, Rng& rng,
                      std::uint64_t step);

struct SeparationReport {
  double value_grad_on_denoiser = 0.0;     // |dL_v/d theta|
  double value_grad_on_projector = 0.0;    // |dL_v/d projector|
  double generation_grad_on_predictor = 0.0;  // |d(L_d + L_c)/d phi|
  double diffusion_grad_on_projector = 0.0;   // |dL_d/d projector|

  bool separated() const {
    return value_grad_on_denoiser == 0.0 && value_grad_on_projector == 0.0 &&
           generation_grad_on_predictor == 0.0 && diffusion_grad_on_projector == 0.0;
  }
};

// Recomputes each loss on identical draws and measures cross-block gradient
// norms; all are exactly zero when the computation graphs are disjoint.
SeparationReport gradient_separation_check(const ModelBundle& models,
                                           const Batch& batch,
                                           const ContrastiveIndex* index,
                                           const Rng& rng);

// Everything needed to continue a run bit-identically.
struct TrainState {
  ModelBundle models;
  OptimizerState opt;
  Rng rng;
  std::uint64_t step = 0;

  void save(const std::filesystem::path& path) const;
  static TrainState load(const std::filesystem::path& path);
};

struct TrainOutputs {
  std::filesystem::path checkpoint;   // written after every K steps and at the end
  std::filesystem::path metrics_csv;  // appended per step
};

struct TrainResult {
  TrainState state;
  std::vector<LossReport> log;  // rows produced by this call
};

inline constexpr const char* kMetricsHeader = "step,loss_d,loss_v,loss_c,loss_total";

// Fresh run. The contrastive index is built from the full dataset with a
// seed-derived stream, so resumed runs rebuild the identical index.
TrainResult train(const OfflineDataset& dataset, const ModelConfig& model_cfg,
                  const ContrastiveConfig& contrast_cfg, const TrainConfig& cfg,
                  const std::optional<TrainOutputs>& outputs);
// Continues `state` until cfg.steps total steps have been taken.
TrainResult resume(const OfflineDataset& dataset, TrainState state,
                   const ContrastiveConfig& contrast_cfg, const TrainConfig& cfg,
                   const std::optional<TrainOutputs>& outputs);

std::string format_metrics_row(const LossReport& r);

}  // namespace cdiff
