#pragma once

#include <cstddef>
#include <vector>

#include "lrvq/matrix.hpp"

namespace lrvq {

struct TensorShape {
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  std::size_t k_h = 1;
  std::size_t k_w = 1;

  std::size_t numel() const noexcept { return c_out * c_in * k_h * k_w; }
  bool operator==(const TensorShape&) const = default;
};

/// 4-D convolution filter stored in (c_out, c_in, k_h, k_w) row-major order.
struct WeightTensor {
  TensorShape shape;
  std::vector<double> data;

  WeightTensor() = default;
  explicit WeightTensor(TensorShape s, double fill = 0.0);
  WeightTensor(TensorShape s, std::vector<double> values);

  bool operator==(const WeightTensor&) const = default;
};

/// Groups consecutive runs of m elements into rows: (N/m x m).
/// Throws Errc::non_divisible when m does not divide N.
Matrix reshape_to_subvectors(const WeightTensor& w, std::size_t m);

/// Exact inverse of reshape_to_subvectors.
WeightTensor inverse_reshape(const Matrix& subvectors, const TensorShape& shape);

}  // namespace lrvq
