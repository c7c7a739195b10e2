#include "cdiff/tensor.h"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "cdiff/error.h"

namespace cdiff {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape_in)
    : shape(std::move(shape_in)), data(shape_product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_product(shape) != data.size()) {
    throw DimensionError("tensor shape product " +
                         std::to_string(shape_product(shape)) +
                         " does not match data length " +
                         std::to_string(data.size()));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape.empty()) return 0;
  return shape.size() == 1 ? 1 : data.size() / shape.back();
}

std::size_t Tensor::cols() const { return shape.empty() ? 0 : shape.back(); }

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data).subspan(r * cols(), cols());
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data).subspan(r * cols(), cols());
}

void Tensor::check_finite(std::string_view context) const {
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!std::isfinite(data[k])) {
      throw NumericError(std::string(context) + ": non-finite value at flat index " +
                         std::to_string(k));
    }
  }
}

}  // namespace cdiff
