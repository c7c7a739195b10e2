#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdiff/mlp.h"
#include "cdiff/rng.h"
#include "cdiff/tensor.h"

namespace cdiff {

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(const std::string& text);
std::string to_string(ScheduleKind kind);

// Noise schedule over diffusion steps 1..N. Index 0 is the clean data
// (alpha_bar(0) = 1).
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;
  // Betas for steps 1..N, each in (0, 1).
  static DiffusionSchedule from_betas(std::vector<double> betas);
  // Linear betas from beta_start to beta_end inclusive.
  static DiffusionSchedule linear(std::size_t steps, double beta_start = 1e-4,
                                  double beta_end = 2e-2);
  // alpha_bar(i) = f(i)/f(0), f(t) = cos^2(((t/N) + s)/(1 + s) * pi/2),
  // betas clipped to max_beta.
  static DiffusionSchedule cosine(std::size_t steps, double offset = 0.008,
                                  double max_beta = 0.999);
  static DiffusionSchedule make(ScheduleKind kind, std::size_t steps);

  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t i) const;
  double alpha(std::size_t i) const;
  double alpha_bar(std::size_t i) const;
  // 1 - alpha_bar(i), accumulated as (1 - a_{i-1}) + a_{i-1} * beta_i so that
  // step 1 gives beta_1 exactly.
  double one_minus_alpha_bar(std::size_t i) const;

  // Posterior q(x_{i-1} | x_i, x_0) mean coefficients:
  //   on x_i: sqrt(alpha_i) (1 - alpha_bar_{i-1}) / (1 - alpha_bar_i)
  //   on x_0: sqrt(alpha_bar_{i-1}) beta_i / (1 - alpha_bar_i)
  double posterior_coef_xt(std::size_t i) const;
  double posterior_coef_x0(std::size_t i) const;

  const std::vector<double>& betas() const { return betas_; }

 private:
  explicit DiffusionSchedule(std::vector<double> betas);
  void check_step(std::size_t i) const;

  std::vector<double> betas_;
  std::vector<double> alpha_bar_;      // size N + 1
  std::vector<double> one_minus_bar_;  // size N + 1
};

// Flattened window values tagged with their diffusion step.
struct NoisyTrajectory {
  std::vector<double> values;
  std::size_t step = 0;
};

// Closed-form marginal x_i = sqrt(alpha_bar_i) x_0 + sqrt(1 - alpha_bar_i) noise.
NoisyTrajectory forward_sample(const NoisyTrajectory& x0, std::size_t i,
                               std::span<const double> noise,
                               const DiffusionSchedule& schedule);

// Network input row: window values followed by time_embed(step, embed_dim).
std::vector<double> conditioned_input(std::span<const double> window,
                                      std::size_t step, std::size_t embed_dim);

// Clean-window estimate psi(x_i, i). The denoiser's input size must equal
// window size + embedding size and its output the window size.
NoisyTrajectory reconstruct(const Mlp& denoiser, const NoisyTrajectory& x_i,
                            std::size_t i, std::size_t embed_dim);

std::vector<double> posterior_mean(std::span<const double> x_i,
                                   std::span<const double> x0_hat,
                                   const DiffusionSchedule& schedule,
                                   std::size_t i);

class ReturnPredictor;

struct Guide {
  const ReturnPredictor* predictor = nullptr;
  double scale = 0.0;  // rho
};

// One reverse step: mu + rho * grad J(x_i, i) + sqrt(beta_i) * noise. The
// noise term is dropped at i = 1. The guide term is skipped when no guide is
// given or its scale is zero.
NoisyTrajectory denoise_step(const NoisyTrajectory& x_i, std::size_t i,
                             const Mlp& denoiser, std::size_t embed_dim,
                             std::optional<Guide> guide,
                             const DiffusionSchedule& schedule,
                             std::span<const double> noise);
NoisyTrajectory denoise_step(const NoisyTrajectory& x_i, std::size_t i,
                             const Mlp& denoiser, std::size_t embed_dim,
                             std::optional<Guide> guide,
                             const DiffusionSchedule& schedule, Rng& rng);

// Overwrites the first state slot (the leading state_dim entries) with the
// observation.
void apply_condition(NoisyTrajectory& x, std::span<const double> observation,
                     std::size_t state_dim);

}  // namespace cdiff
