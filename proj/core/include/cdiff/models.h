#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "cdiff/checkpoint.h"
#include "cdiff/contrastive.h"
#include "cdiff/dataset.h"
#include "cdiff/diffusion.h"
#include "cdiff/mlp.h"
#include "cdiff/return_predictor.h"

namespace cdiff {

struct ModelConfig {
  std::size_t state_dim = 2;
  std::size_t action_dim = 2;
  std::size_t horizon = 8;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> denoiser_hidden{128, 128};
  std::vector<std::size_t> predictor_hidden{64, 64};
  std::size_t latent_dim = 16;
  ScheduleKind schedule = ScheduleKind::kCosine;
  std::size_t diffusion_steps = 20;

  std::size_t pair_dim() const { return state_dim + action_dim; }
  std::size_t window_size() const { return (horizon + 1) * pair_dim(); }
  void validate() const;
};

// Denoiser, return predictor and projector plus everything needed to use
// them outside training: the schedule and the data normalization.
struct ModelBundle {
  ModelConfig config;
  DiffusionSchedule schedule;
  Mlp denoiser;
  ReturnPredictor predictor;
  Projector projector;
  NormStats norm;

  static ModelBundle init(const ModelConfig& cfg, NormStats norm, Rng& rng);

  // Blocks: "config/*", "norm/*", "denoiser/layer<k>/{weight,bias}",
  // "predictor/...", "projector/...".
  void write_blocks(BlockFile& file) const;
  static ModelBundle read_blocks(const BlockFile& file);
};

void write_mlp_blocks(BlockFile& file, const std::string& prefix, const Mlp& net);
void read_mlp_blocks(const BlockFile& file, const std::string& prefix, Mlp& net);

}  // namespace cdiff
