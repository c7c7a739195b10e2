#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace cdiff {

// Dense row-major float64 array. Rank 1 tensors behave as a single row.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in);
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  // Throws NumericError naming `context` if any entry is NaN or Inf.
  void check_finite(std::string_view context) const;
};

std::size_t shape_product(std::span<const std::size_t> shape);

}  // namespace cdiff
