#include "cdiff/training.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cdiff/error.h"

namespace cdiff {

Ablation parse_ablation(const std::string& text) {
  if (text == "none" || text == "full") return Ablation::kFull;
  if (text == "no-contrast" || text == "no_contrast") return Ablation::kNoContrast;
  if (text == "positives-only" || text == "positives_only") return Ablation::kPositivesOnly;
  throw ConfigError("unknown ablation '" + text + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull:
      return "none";
    case Ablation::kNoContrast:
      return "no-contrast";
    case Ablation::kPositivesOnly:
      return "positives-only";
  }
  return "none";
}

void TrainConfig::validate() const {
  if (lambda_d < 0.0 || lambda_v < 0.0 || lambda_c < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

WindowSet make_window_set(const OfflineDataset& dataset, std::size_t horizon) {
  const auto raw = slice_windows(dataset, horizon);
  WindowSet set;
  set.window_size = (horizon + 1) * (dataset.state_dim() + dataset.action_dim());
  set.windows.reserve(raw.size() * set.window_size);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto w = dataset.norm().normalize_window(raw[k].values);
    set.windows.insert(set.windows.end(), w.begin(), w.end());
    set.targets.push_back(dataset.norm().scale_return(raw[k].start_return));
    set.ids.push_back(k);
  }
  return set;
}

WindowSet filter_high_return(const WindowSet& set, double threshold) {
  WindowSet out;
  out.window_size = set.window_size;
  for (std::size_t k = 0; k < set.count(); ++k) {
    if (set.targets[k] < threshold) continue;
    out.windows.insert(out.windows.end(),
                       set.windows.begin() + static_cast<std::ptrdiff_t>(k * set.window_size),
                       set.windows.begin() + static_cast<std::ptrdiff_t>((k + 1) * set.window_size));
    out.targets.push_back(set.targets[k]);
    out.ids.push_back(set.ids[k]);
  }
  return out;
}

Batch draw_batch(const WindowSet& set, std::size_t batch_size, Rng& rng) {
  if (set.count() == 0) throw ConfigError("no training windows available");
  Batch b;
  b.windows.reserve(batch_size * set.window_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t pick = rng.index(set.count());
    b.windows.insert(b.windows.end(),
                     set.windows.begin() + static_cast<std::ptrdiff_t>(pick * set.window_size),
                     set.windows.begin() + static_cast<std::ptrdiff_t>((pick + 1) * set.window_size));
    b.targets.push_back(set.targets[pick]);
    b.ids.push_back(set.ids[pick]);
  }
  return b;
}

double loss_d(const Mlp& denoiser, std::span<const double> window, std::size_t i,
              std::span<const double> noise, const DiffusionSchedule& schedule,
              std::size_t embed_dim) {
  NoisyTrajectory clean{std::vector<double>(window.begin(), window.end()), 0};
  const NoisyTrajectory x_i = forward_sample(clean, i, noise, schedule);
  const NoisyTrajectory recon = reconstruct(denoiser, x_i, i, embed_dim);
  double total = 0.0;
  for (std::size_t k = 0; k < window.size(); ++k) {
    const double d = window[k] - recon.values[k];
    total += d * d;
  }
  return total;
}

LossEvaluation evaluate_losses(const ModelBundle& models, const Batch& batch,
                               const ContrastiveIndex* index, LossWeights weights,
                               Rng& rng) {
  const ModelConfig& mc = models.config;
  const std::size_t n = batch.size();
  const std::size_t w = mc.window_size();
  const std::size_t e = mc.embed_dim;
  if (batch.windows.size() != n * w) {
    throw DimensionError("batch windows do not match the model window size");
  }

  std::vector<double> input;
  input.reserve(n * (w + e));
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = 1 + rng.index(models.schedule.steps());
    const auto noise = rng.normal_vector(w);
    const auto clean = std::span<const double>(batch.windows).subspan(b * w, w);
    NoisyTrajectory x_i =
        forward_sample(NoisyTrajectory{std::vector<double>(clean.begin(), clean.end()), 0},
                       i, noise, models.schedule);
    apply_condition(x_i, clean.first(mc.state_dim), mc.state_dim);
    const auto row = conditioned_input(x_i.values, i, e);
    input.insert(input.end(), row.begin(), row.end());
  }
  const Tensor net_in = Tensor::matrix(n, w + e, std::move(input));

  auto [recon, denoise_tape] = mlp_forward(models.denoiser, net_in);
  auto [value, value_tape] = mlp_forward(models.predictor.net(), net_in);

  LossEvaluation out;
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor d_recon({n, w});
  for (std::size_t k = 0; k < n * w; ++k) {
    const double diff = recon.data[k] - batch.windows[k];
    out.loss_d += diff * diff;
    d_recon.data[k] = weights.d * 2.0 * diff * inv_n;
  }
  out.loss_d *= inv_n;

  Tensor d_value({n, 1});
  for (std::size_t b = 0; b < n; ++b) {
    const double diff = value.data[b] - batch.targets[b];
    out.loss_v += diff * diff;
    d_value.data[b] = weights.v * 2.0 * diff * inv_n;
  }
  out.loss_v *= inv_n;

  out.grads.projector.assign(models.projector.net().param_count(), 0.0);
  if (index != nullptr) {
    TrajLoss traj = contrastive_loss_traj(recon.data, n, mc.state_dim, mc.action_dim,
                                          mc.horizon, *index, models.projector, rng);
    out.loss_c = traj.loss;
    for (std::size_t k = 0; k < d_recon.data.size(); ++k) {
      d_recon.data[k] += weights.c * traj.d_windows[k];
    }
    for (std::size_t k = 0; k < traj.projector_grads.size(); ++k) {
      out.grads.projector[k] = weights.c * traj.projector_grads[k];
    }
  }

  out.grads.denoiser = mlp_backward(denoise_tape, d_recon).params;
  out.grads.predictor = mlp_backward(value_tape, d_value).params;
  return out;
}

OptimizerState OptimizerState::init(const ModelBundle& models, double learning_rate) {
  AdamConfig c;
  c.learning_rate = learning_rate;
  return OptimizerState{AdamState(c, models.denoiser.param_count()),
                        AdamState(c, models.predictor.net().param_count()),
                        AdamState(c, models.projector.net().param_count())};
}

LossReport train_step(ModelBundle& models, OptimizerState& opt, const Batch& batch,
                      const TrainConfig& cfg, const ContrastiveIndex* index, Rng& rng,
                      std::uint64_t step) {
  const ContrastiveIndex* active = cfg.ablation == Ablation::kNoContrast ? nullptr : index;
  LossEvaluation eval = evaluate_losses(models, batch, active,
                                        {cfg.lambda_d, cfg.lambda_v, cfg.lambda_c}, rng);
  LossReport r;
  r.step = step;
  r.loss_d = eval.loss_d;
  r.loss_v = eval.loss_v;
  r.loss_c = active == nullptr ? 0.0 : eval.loss_c;
  r.loss_total = cfg.lambda_d * r.loss_d + cfg.lambda_v * r.loss_v +
                 (active == nullptr ? 0.0 : cfg.lambda_c * r.loss_c);
  if (!std::isfinite(r.loss_total)) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << " (L_d=" << r.loss_d
       << ", L_v=" << r.loss_v << ", L_c=" << r.loss_c << "); batch window ids:";
    for (auto id : batch.ids) os << ' ' << id;
    throw NumericError(os.str());
  }
  adam_step(opt.denoiser, models.denoiser.params(), eval.grads.denoiser);
  adam_step(opt.predictor, models.predictor.net().params(), eval.grads.predictor);
  adam_step(opt.projector, models.projector.net().params(), eval.grads.projector);
  return r;
}

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

SeparationReport gradient_separation_check(const ModelBundle& models,
                                           const Batch& batch,
                                           const ContrastiveIndex* index,
                                           const Rng& rng) {
  SeparationReport rep;
  Rng r1 = rng;
  const auto value_only = evaluate_losses(models, batch, index, {0.0, 1.0, 0.0}, r1);
  rep.value_grad_on_denoiser = norm2(value_only.grads.denoiser);
  rep.value_grad_on_projector = norm2(value_only.grads.projector);
  Rng r2 = rng;
  const auto generation = evaluate_losses(models, batch, index, {1.0, 0.0, 1.0}, r2);
  rep.generation_grad_on_predictor = norm2(generation.grads.predictor);
  Rng r3 = rng;
  const auto diffusion_only = evaluate_losses(models, batch, index, {1.0, 0.0, 0.0}, r3);
  rep.diffusion_grad_on_projector = norm2(diffusion_only.grads.projector);
  return rep;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void write_adam(BlockFile& f, const std::string& prefix, const AdamState& s) {
  f.add(prefix + "/m", s.m);
  f.add(prefix + "/v", s.v);
  f.add_scalar(prefix + "/step", static_cast<double>(s.step));
  f.add(prefix + "/hyper", std::vector<double>{s.config.learning_rate, s.config.beta1,
                                               s.config.beta2, s.config.epsilon});
}

AdamState read_adam(const BlockFile& f, const std::string& prefix) {
  AdamState s;
  s.m = f.get(prefix + "/m").data;
  s.v = f.get(prefix + "/v").data;
  s.step = static_cast<std::uint64_t>(f.scalar(prefix + "/step"));
  const auto& h = f.get(prefix + "/hyper").data;
  if (h.size() != 4) throw ParseError("malformed optimizer block '" + prefix + "'");
  s.config = AdamConfig{h[0], h[1], h[2], h[3]};
  return s;
}

}  // namespace

void TrainState::save(const std::filesystem::path& path) const {
  BlockFile f;
  models.write_blocks(f);
  write_adam(f, "opt/denoiser", opt.denoiser);
  write_adam(f, "opt/predictor", opt.predictor);
  write_adam(f, "opt/projector", opt.projector);
  f.add_scalar("train/step", static_cast<double>(step));
  f.add_text("train/rng", rng.serialize());
  f.save(path);
}

TrainState TrainState::load(const std::filesystem::path& path) {
  const BlockFile f = BlockFile::load(path);
  TrainState s{ModelBundle::read_blocks(f), {}, Rng(), 0};
  if (f.find("train/step") == nullptr) {
    throw ParseError("checkpoint '" + path.string() + "' carries no training state");
  }
  s.opt.denoiser = read_adam(f, "opt/denoiser");
  s.opt.predictor = read_adam(f, "opt/predictor");
  s.opt.projector = read_adam(f, "opt/projector");
  s.step = static_cast<std::uint64_t>(f.scalar("train/step"));
  s.rng = Rng::deserialize(f.text("train/rng"));
  return s;
}

std::string format_metrics_row(const LossReport& r) {
  return std::to_string(r.step) + "," + format_double(r.loss_d) + "," +
         format_double(r.loss_v) + "," + format_double(r.loss_c) + "," +
         format_double(r.loss_total);
}

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kIndexStream = 2;
constexpr std::uint64_t kTrainStream = 3;

void check_dims(const OfflineDataset& dataset, const ModelConfig& mc) {
  if (dataset.state_dim() != mc.state_dim || dataset.action_dim() != mc.action_dim) {
    throw ConfigError("dataset dims (" + std::to_string(dataset.state_dim()) + ", " +
                      std::to_string(dataset.action_dim()) +
                      ") do not match model config (" + std::to_string(mc.state_dim) +
                      ", " + std::to_string(mc.action_dim) + ")");
  }
}

TrainResult run_loop(const OfflineDataset& dataset, TrainState state,
                     const ContrastiveConfig& contrast_cfg, const TrainConfig& cfg,
                     const std::optional<TrainOutputs>& outputs, bool fresh) {
  cfg.validate();
  check_dims(dataset, state.models.config);
  WindowSet windows = make_window_set(dataset, state.models.config.horizon);
  if (cfg.ablation == Ablation::kPositivesOnly) {
    windows = filter_high_return(windows, contrast_cfg.xi);
    if (windows.count() == 0) {
      throw ConfigError("positives-only ablation: no window has scaled return >= xi");
    }
  }
  std::optional<ContrastiveIndex> index;
  if (cfg.ablation != Ablation::kNoContrast) {
    Rng index_rng(mix_seed(cfg.seed, kIndexStream));
    index = ContrastiveIndex::build(dataset, contrast_cfg, index_rng);
  }

  std::ofstream metrics;
  if (outputs) {
    const bool exists = std::filesystem::exists(outputs->metrics_csv);
    metrics.open(outputs->metrics_csv,
                 fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) {
      throw IoError("cannot open metrics log '" + outputs->metrics_csv.string() + "'");
    }
    if (fresh || !exists) metrics << kMetricsHeader << '\n';
  }

  TrainResult result{std::move(state), {}};
  TrainState& st = result.state;
  while (st.step < cfg.steps) {
    const Batch batch = draw_batch(windows, cfg.batch_size, st.rng);
    const LossReport r = train_step(st.models, st.opt, batch, cfg,
                                    index ? &*index : nullptr, st.rng, st.step + 1);
    st.step += 1;
    result.log.push_back(r);
    if (outputs) {
      metrics << format_metrics_row(r) << '\n';
      if (!metrics) throw IoError("write failed for '" + outputs->metrics_csv.string() + "'");
      if (cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0) {
        metrics.flush();
        st.save(outputs->checkpoint);
      }
    }
  }
  if (outputs) st.save(outputs->checkpoint);
  return result;
}

}  // namespace

TrainResult train(const OfflineDataset& dataset, const ModelConfig& model_cfg,
                  const ContrastiveConfig& contrast_cfg, const TrainConfig& cfg,
                  const std::optional<TrainOutputs>& outputs) {
  cfg.validate();
  model_cfg.validate();
  check_dims(dataset, model_cfg);
  ModelConfig mc = model_cfg;
  mc.latent_dim = contrast_cfg.latent_dim;
  Rng init_rng(mix_seed(cfg.seed, kInitStream));
  TrainState state{ModelBundle::init(mc, dataset.norm(), init_rng), {},
                   Rng(mix_seed(cfg.seed, kTrainStream)), 0};
  state.opt = OptimizerState::init(state.models, cfg.learning_rate);
  return run_loop(dataset, std::move(state), contrast_cfg, cfg, outputs, true);
}

TrainResult resume(const OfflineDataset& dataset, TrainState state,
                   const ContrastiveConfig& contrast_cfg, const TrainConfig& cfg,
                   const std::optional<TrainOutputs>& outputs) {
  return run_loop(dataset, std::move(state), contrast_cfg, cfg, outputs, false);
}

}  // namespace cdiff
