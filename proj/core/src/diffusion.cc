#include "cdiff/diffusion.h"

#include <cmath>
#include <numbers>
#include <string>

#include "cdiff/error.h"
#include "cdiff/return_predictor.h"

namespace cdiff {

ScheduleKind parse_schedule_kind(const std::string& text) {
  if (text == "linear") return ScheduleKind::kLinear;
  if (text == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("unknown schedule kind '" + text + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas)
    : betas_(std::move(betas)) {
  if (betas_.empty()) throw ConfigError("diffusion schedule needs N >= 1");
  alpha_bar_.assign(betas_.size() + 1, 1.0);
  one_minus_bar_.assign(betas_.size() + 1, 0.0);
  for (std::size_t i = 1; i <= betas_.size(); ++i) {
    const double b = betas_[i - 1];
    if (!(b > 0.0 && b < 1.0)) {
      throw ConfigError("beta at step " + std::to_string(i) +
                        " must lie in (0, 1), got " + std::to_string(b));
    }
    alpha_bar_[i] = alpha_bar_[i - 1] * (1.0 - b);
    one_minus_bar_[i] = one_minus_bar_[i - 1] + alpha_bar_[i - 1] * b;
  }
}

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
  return DiffusionSchedule(std::move(betas));
}

DiffusionSchedule DiffusionSchedule::linear(std::size_t steps, double beta_start,
                                            double beta_end) {
  if (steps == 0) throw ConfigError("diffusion schedule needs N >= 1");
  std::vector<double> betas(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double frac =
        steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
    betas[k] = beta_start + frac * (beta_end - beta_start);
  }
  return DiffusionSchedule(std::move(betas));
}

DiffusionSchedule DiffusionSchedule::cosine(std::size_t steps, double offset,
                                            double max_beta) {
  if (steps == 0) throw ConfigError("diffusion schedule needs N >= 1");
  const double n = static_cast<double>(steps);
  auto f = [&](double t) {
    const double c = std::cos((t / n + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> betas(steps);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double b = 1.0 - f(static_cast<double>(i)) / f(static_cast<double>(i - 1));
    betas[i - 1] = std::min(b, max_beta);
  }
  return DiffusionSchedule(std::move(betas));
}

DiffusionSchedule DiffusionSchedule::make(ScheduleKind kind, std::size_t steps) {
  return kind == ScheduleKind::kLinear ? linear(steps) : cosine(steps);
}

void DiffusionSchedule::check_step(std::size_t i) const {
  if (i < 1 || i > steps()) {
    throw IndexError("diffusion step " + std::to_string(i) +
                     " outside [1, " + std::to_string(steps()) + "]");
  }
}

double DiffusionSchedule::beta(std::size_t i) const {
  check_step(i);
  return betas_[i - 1];
}

double DiffusionSchedule::alpha(std::size_t i) const { return 1.0 - beta(i); }

double DiffusionSchedule::alpha_bar(std::size_t i) const {
  if (i > steps()) throw IndexError("alpha_bar index out of range");
  return alpha_bar_[i];
}

double DiffusionSchedule::one_minus_alpha_bar(std::size_t i) const {
  if (i > steps()) throw IndexError("alpha_bar index out of range");
  return one_minus_bar_[i];
}

double DiffusionSchedule::posterior_coef_xt(std::size_t i) const {
  check_step(i);
  return std::sqrt(alpha(i)) * one_minus_bar_[i - 1] / one_minus_bar_[i];
}

double DiffusionSchedule::posterior_coef_x0(std::size_t i) const {
  check_step(i);
  return std::sqrt(alpha_bar_[i - 1]) * betas_[i - 1] / one_minus_bar_[i];
}

NoisyTrajectory forward_sample(const NoisyTrajectory& x0, std::size_t i,
                               std::span<const double> noise,
                               const DiffusionSchedule& schedule) {
  if (i < 1 || i > schedule.steps()) {
    throw IndexError("forward_sample step " + std::to_string(i) +
                     " outside [1, " + std::to_string(schedule.steps()) + "]");
  }
  if (noise.size() != x0.values.size()) {
    throw DimensionError("forward_sample noise size does not match window");
  }
  const double signal = std::sqrt(schedule.alpha_bar(i));
  const double spread = std::sqrt(schedule.one_minus_alpha_bar(i));
  NoisyTrajectory out{std::vector<double>(x0.values.size()), i};
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    out.values[k] = signal * x0.values[k] + spread * noise[k];
  }
  return out;
}

std::vector<double> conditioned_input(std::span<const double> window,
                                      std::size_t step, std::size_t embed_dim) {
  std::vector<double> row(window.begin(), window.end());
  const auto emb = time_embed(step, embed_dim);
  row.insert(row.end(), emb.begin(), emb.end());
  return row;
}

NoisyTrajectory reconstruct(const Mlp& denoiser, const NoisyTrajectory& x_i,
                            std::size_t i, std::size_t embed_dim) {
  if (i < 1) throw IndexError("reconstruct requires step >= 1");
  if (denoiser.out_dim() != x_i.values.size()) {
    throw DimensionError("denoiser output size does not match window size");
  }
  Tensor in = Tensor::vector(conditioned_input(x_i.values, i, embed_dim));
  Tensor out = mlp_apply(denoiser, in);
  return NoisyTrajectory{std::move(out.data), 0};
}

std::vector<double> posterior_mean(std::span<const double> x_i,
                                   std::span<const double> x0_hat,
                                   const DiffusionSchedule& schedule,
                                   std::size_t i) {
  if (i == 0) throw IndexError("posterior_mean is undefined at step 0");
  if (x_i.size() != x0_hat.size()) {
    throw DimensionError("posterior_mean inputs differ in size");
  }
  const double c_t = schedule.posterior_coef_xt(i);
  const double c_0 = schedule.posterior_coef_x0(i);
  std::vector<double> mu(x_i.size());
  for (std::size_t k = 0; k < mu.size(); ++k) {
    mu[k] = c_t * x_i[k] + c_0 * x0_hat[k];
  }
  return mu;
}

NoisyTrajectory denoise_step(const NoisyTrajectory& x_i, std::size_t i,
                             const Mlp& denoiser, std::size_t embed_dim,
                             std::optional<Guide> guide,
                             const DiffusionSchedule& schedule,
                             std::span<const double> noise) {
  if (noise.size() != x_i.values.size()) {
    throw DimensionError("denoise_step noise size does not match window");
  }
  const NoisyTrajectory x0_hat = reconstruct(denoiser, x_i, i, embed_dim);
  NoisyTrajectory out{posterior_mean(x_i.values, x0_hat.values, schedule, i),
                      i - 1};
  if (guide && guide->predictor != nullptr && guide->scale != 0.0) {
    const auto g = guide->predictor->input_gradient(x_i.values, i);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        throw NumericError("non-finite guidance gradient at step " +
                           std::to_string(i));
      }
      out.values[k] += guide->scale * g[k];
    }
  }
  if (i > 1) {
    const double sigma = std::sqrt(schedule.beta(i));
    for (std::size_t k = 0; k < out.values.size(); ++k) {
      out.values[k] += sigma * noise[k];
    }
  }
  return out;
}

NoisyTrajectory denoise_step(const NoisyTrajectory& x_i, std::size_t i,
                             const Mlp& denoiser, std::size_t embed_dim,
                             std::optional<Guide> guide,
                             const DiffusionSchedule& schedule, Rng& rng) {
  std::vector<double> noise(x_i.values.size(), 0.0);
  if (i > 1) noise = rng.normal_vector(x_i.values.size());
  return denoise_step(x_i, i, denoiser, embed_dim, guide, schedule, noise);
}

void apply_condition(NoisyTrajectory& x, std::span<const double> observation,
                     std::size_t state_dim) {
  if (observation.size() != state_dim || x.values.size() < state_dim) {
    throw DimensionError("condition observation has dimension " +
                         std::to_string(observation.size()) + ", expected " +
                         std::to_string(state_dim));
  }
  std::copy(observation.begin(), observation.end(), x.values.begin());
}

}  // namespace cdiff
