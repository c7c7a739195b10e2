#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cdiff {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment accumulators for one flat parameter block.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::size_t param_count)
      : config(cfg), m(param_count, 0.0), v(param_count, 0.0) {}
};

// Bias-corrected Adam update. Throws NumericError, leaving params and state
// untouched, when any gradient entry is non-finite.
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads);

}  // namespace cdiff
