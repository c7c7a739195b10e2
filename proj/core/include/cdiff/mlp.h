#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdiff/rng.h"
#include "cdiff/tensor.h"

namespace cdiff {

enum class Activation { kLinear, kRelu, kSigmoid };

// Fully connected network. Hidden layers use ReLU; the output layer uses the
// activation given at construction. Parameters live in one flat buffer,
// layer by layer, weight (out x in, row-major) followed by bias.
class Mlp {
 public:
  Mlp() = default;
  // Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(std::vector<std::size_t> sizes, Activation output, Rng& rng);
  static Mlp zeros(std::vector<std::size_t> sizes, Activation output);

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t in_dim() const { return sizes_.front(); }
  std::size_t out_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  Activation activation(std::size_t layer) const;
  Activation output_activation() const { return output_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<double> weight(std::size_t layer);
  std::span<const double> weight(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

 private:
  Mlp(std::vector<std::size_t> sizes, Activation output);

  std::vector<std::size_t> sizes_;
  Activation output_ = Activation::kLinear;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;  // start of each layer's weight block
};

struct MlpGradients {
  std::vector<double> params;  // same layout as Mlp::params()
  Tensor input;                // same shape as the forward input
};

// Forward values recorded for one backward pass. Holds a pointer to the
// network, which must outlive the tape.
class GradTape {
 public:
  bool consumed() const { return consumed_; }
  std::size_t batch() const { return batch_; }

 private:
  friend std::pair<Tensor, GradTape> mlp_forward(const Mlp&, const Tensor&);
  friend MlpGradients mlp_backward(GradTape&, const Tensor&);

  const Mlp* net_ = nullptr;
  std::size_t batch_ = 0;
  std::vector<std::size_t> input_shape_;
  std::vector<std::vector<double>> activations_;  // [0] = input
  bool consumed_ = false;
};

// input: [in] or [batch, in].
std::pair<Tensor, GradTape> mlp_forward(const Mlp& net, const Tensor& input);
// Forward pass without recording.
Tensor mlp_apply(const Mlp& net, const Tensor& input);
// output_grad has the forward output's shape. Parameter gradients are summed
// over the batch. A tape can be consumed once.
MlpGradients mlp_backward(GradTape& tape, const Tensor& output_grad);

// Sinusoidal diffusion-step embedding: for k < dim/2 with
// freq_k = 10000^(-k / (dim/2)), entry k is sin(step * freq_k) and entry
// dim/2 + k is cos(step * freq_k).
std::vector<double> time_embed(std::size_t step, std::size_t dim);

}  // namespace cdiff
