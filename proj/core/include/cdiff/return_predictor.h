#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdiff/diffusion.h"
#include "cdiff/mlp.h"

namespace cdiff {

// Guide network J: (noisy window, diffusion step) -> predicted scaled return.
// Its parameters are a separate block from the denoiser.
class ReturnPredictor {
 public:
  ReturnPredictor() = default;
  // net input must be window_size + embed_dim, output 1.
  ReturnPredictor(Mlp net, std::size_t window_size, std::size_t embed_dim);

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  std::size_t window_size() const { return window_size_; }
  std::size_t embed_dim() const { return embed_dim_; }

  double predict(std::span<const double> x_i, std::size_t i) const;
  // dJ/dx over the window entries (the step embedding is excluded).
  std::vector<double> input_gradient(std::span<const double> x_i,
                                     std::size_t i) const;

 private:
  Mlp net_;
  std::size_t window_size_ = 0;
  std::size_t embed_dim_ = 0;
};

struct ReturnLoss {
  double loss = 0.0;
  std::vector<double> param_grads;
};

// Squared error (J(x_i, i) - target)^2 and its parameter gradient.
ReturnLoss loss_v(const ReturnPredictor& pred, std::span<const double> x_i,
                  std::size_t i, double target);

}  // namespace cdiff
