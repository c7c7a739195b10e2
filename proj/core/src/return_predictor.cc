#include "cdiff/return_predictor.h"

#include <string>

#include "cdiff/error.h"

namespace cdiff {

ReturnPredictor::ReturnPredictor(Mlp net, std::size_t window_size,
                                 std::size_t embed_dim)
    : net_(std::move(net)), window_size_(window_size), embed_dim_(embed_dim) {
  if (net_.in_dim() != window_size + embed_dim || net_.out_dim() != 1) {
    throw DimensionError("return predictor expects input " +
                         std::to_string(window_size + embed_dim) +
                         " and scalar output");
  }
}

double ReturnPredictor::predict(std::span<const double> x_i,
                                std::size_t i) const {
  if (x_i.size() != window_size_) {
    throw DimensionError("return predictor window size mismatch");
  }
  return mlp_apply(net_, Tensor::vector(conditioned_input(x_i, i, embed_dim_)))
      .data[0];
}

std::vector<double> ReturnPredictor::input_gradient(std::span<const double> x_i,
                                                    std::size_t i) const {
  if (x_i.size() != window_size_) {
    throw DimensionError("return predictor window size mismatch");
  }
  auto [out, tape] =
      mlp_forward(net_, Tensor::vector(conditioned_input(x_i, i, embed_dim_)));
  MlpGradients g = mlp_backward(tape, Tensor::vector({1.0}));
  g.input.check_finite("return predictor input gradient");
  return std::vector<double>(g.input.data.begin(),
                             g.input.data.begin() +
                                 static_cast<std::ptrdiff_t>(window_size_));
}

ReturnLoss loss_v(const ReturnPredictor& pred, std::span<const double> x_i,
                  std::size_t i, double target) {
  auto [out, tape] = mlp_forward(
      pred.net(), Tensor::vector(conditioned_input(x_i, i, pred.embed_dim())));
  const double err = out.data[0] - target;
  MlpGradients g = mlp_backward(tape, Tensor::vector({2.0 * err}));
  return ReturnLoss{err * err, std::move(g.params)};
}

}  // namespace cdiff
