#include "cdiff/mlp.h"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "cdiff/error.h"

namespace cdiff {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void apply_activation(Activation act, std::vector<double>& values) {
  switch (act) {
    case Activation::kLinear:
      break;
    case Activation::kRelu:
      for (auto& v : values) v = v < 0.0 ? 0.0 : v;  // NaN passes through
      break;
    case Activation::kSigmoid:
      for (auto& v : values) v = 1.0 / (1.0 + std::exp(-v));
      break;
  }
}

// Converts dL/dy into dL/dz in place, given post-activation values y.
void activation_backward(Activation act, std::span<const double> post,
                         std::vector<double>& grad) {
  switch (act) {
    case Activation::kLinear:
      break;
    case Activation::kRelu:
      for (std::size_t k = 0; k < grad.size(); ++k) {
        if (post[k] <= 0.0) grad[k] = 0.0;
      }
      break;
    case Activation::kSigmoid:
      for (std::size_t k = 0; k < grad.size(); ++k) {
        grad[k] *= post[k] * (1.0 - post[k]);
      }
      break;
  }
}

std::size_t check_input(const Mlp& net, const Tensor& input) {
  if (input.rank() != 1 && input.rank() != 2) {
    throw DimensionError("mlp input must be rank 1 or 2, got rank " +
                         std::to_string(input.rank()));
  }
  if (input.cols() != net.in_dim()) {
    throw DimensionError("mlp input dimension " + std::to_string(input.cols()) +
                         " does not match first layer size " +
                         std::to_string(net.in_dim()));
  }
  return input.rows();
}

std::vector<double> layer_forward(const Mlp& net, std::size_t layer,
                                  std::span<const double> in,
                                  std::size_t batch) {
  const std::size_t n_in = net.sizes()[layer];
  const std::size_t n_out = net.sizes()[layer + 1];
  std::vector<double> out(batch * n_out);
  ConstMatrixMap x(in.data(), batch, n_in);
  ConstMatrixMap w(net.weight(layer).data(), n_out, n_in);
  Eigen::Map<const Eigen::RowVectorXd> b(net.bias(layer).data(), n_out);
  MatrixMap y(out.data(), batch, n_out);
  y.noalias() = x * w.transpose();
  y.rowwise() += b;
  apply_activation(net.activation(layer), out);
  return out;
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> sizes, Activation output)
    : sizes_(std::move(sizes)), output_(output) {
  if (sizes_.size() < 2) {
    throw DimensionError("mlp needs at least an input and an output size");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] == 0 || sizes_[l + 1] == 0) {
      throw DimensionError("mlp layer sizes must be positive");
    }
    offsets_.push_back(total);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp::Mlp(std::vector<std::size_t> sizes, Activation output, Rng& rng)
    : Mlp(std::move(sizes), output) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    for (auto& w : weight(l)) w = (2.0 * rng.uniform() - 1.0) * bound;
    for (auto& b : bias(l)) b = (2.0 * rng.uniform() - 1.0) * bound;
  }
}

Mlp Mlp::zeros(std::vector<std::size_t> sizes, Activation output) {
  return Mlp(std::move(sizes), output);
}

Activation Mlp::activation(std::size_t layer) const {
  return layer + 1 == num_layers() ? output_ : Activation::kRelu;
}

std::span<double> Mlp::weight(std::size_t layer) {
  return std::span<double>(params_).subspan(offsets_[layer],
                                            sizes_[layer] * sizes_[layer + 1]);
}
std::span<const double> Mlp::weight(std::size_t layer) const {
  return std::span<const double>(params_).subspan(
      offsets_[layer], sizes_[layer] * sizes_[layer + 1]);
}
std::span<double> Mlp::bias(std::size_t layer) {
  return std::span<double>(params_).subspan(
      offsets_[layer] + sizes_[layer] * sizes_[layer + 1], sizes_[layer + 1]);
}
std::span<const double> Mlp::bias(std::size_t layer) const {
  return std::span<const double>(params_).subspan(
      offsets_[layer] + sizes_[layer] * sizes_[layer + 1], sizes_[layer + 1]);
}

std::pair<Tensor, GradTape> mlp_forward(const Mlp& net, const Tensor& input) {
  const std::size_t batch = check_input(net, input);
  GradTape tape;
  tape.net_ = &net;
  tape.batch_ = batch;
  tape.input_shape_ = input.shape;
  tape.activations_.reserve(net.num_layers() + 1);
  tape.activations_.push_back(input.data);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    tape.activations_.push_back(
        layer_forward(net, l, tape.activations_.back(), batch));
  }
  std::vector<std::size_t> out_shape = input.shape;
  out_shape.back() = net.out_dim();
  Tensor out(std::move(out_shape), tape.activations_.back());
  return {std::move(out), std::move(tape)};
}

Tensor mlp_apply(const Mlp& net, const Tensor& input) {
  const std::size_t batch = check_input(net, input);
  std::vector<double> current = input.data;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    current = layer_forward(net, l, current, batch);
  }
  std::vector<std::size_t> out_shape = input.shape;
  out_shape.back() = net.out_dim();
  return Tensor(std::move(out_shape), std::move(current));
}

MlpGradients mlp_backward(GradTape& tape, const Tensor& output_grad) {
  if (tape.net_ == nullptr) throw UsageError("backward on an empty tape");
  if (tape.consumed_) throw UsageError("gradient tape already consumed");
  const Mlp& net = *tape.net_;
  const std::size_t batch = tape.batch_;
  if (output_grad.size() != batch * net.out_dim()) {
    throw DimensionError("output gradient size " +
                         std::to_string(output_grad.size()) +
                         " does not match forward output size " +
                         std::to_string(batch * net.out_dim()));
  }
  tape.consumed_ = true;

  MlpGradients grads;
  grads.params.assign(net.param_count(), 0.0);
  std::vector<double> upstream = output_grad.data;
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const std::size_t n_in = net.sizes()[l];
    const std::size_t n_out = net.sizes()[l + 1];
    activation_backward(net.activation(l), tape.activations_[l + 1], upstream);

    ConstMatrixMap dz(upstream.data(), batch, n_out);
    ConstMatrixMap x(tape.activations_[l].data(), batch, n_in);
    ConstMatrixMap w(net.weight(l).data(), n_out, n_in);

    const std::size_t w_offset =
        static_cast<std::size_t>(net.weight(l).data() - net.params().data());
    MatrixMap dw(grads.params.data() + w_offset, n_out, n_in);
    dw.noalias() = dz.transpose() * x;
    Eigen::Map<Eigen::RowVectorXd> db(grads.params.data() + w_offset + n_in * n_out,
                                      n_out);
    db = dz.colwise().sum();

    std::vector<double> downstream(batch * n_in);
    MatrixMap dx(downstream.data(), batch, n_in);
    dx.noalias() = dz * w;
    upstream = std::move(downstream);
  }
  grads.input = Tensor(tape.input_shape_, std::move(upstream));
  // Release forward buffers; the tape cannot be replayed.
  tape.activations_.clear();
  return grads;
}

std::vector<double> time_embed(std::size_t step, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ConfigError("time embedding dimension must be even and positive, got " +
                      std::to_string(dim));
  }
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) /
                                              static_cast<double>(half));
    const double phase = static_cast<double>(step) * freq;
    out[k] = std::sin(phase);
    out[half + k] = std::cos(phase);
  }
  return out;
}

}  // namespace cdiff
