#include "lrvq/tensor.hpp"

#include <string>

#include "lrvq/error.hpp"

namespace lrvq {

WeightTensor::WeightTensor(TensorShape s, double fill) : shape(s), data(s.numel(), fill) {}

WeightTensor::WeightTensor(TensorShape s, std::vector<double> values)
    : shape(s), data(std::move(values)) {
  if (data.size() != shape.numel())
    throw Error(Errc::shape_mismatch, "weight tensor data length does not match its shape");
}

Matrix reshape_to_subvectors(const WeightTensor& w, std::size_t m) {
  const std::size_t n = w.shape.numel();
  if (m == 0 || n % m != 0) {
    throw Error(Errc::non_divisible,
                "subvector size " + std::to_string(m) + " does not divide " + std::to_string(n));
  }
  if (w.data.size() != n) throw Error(Errc::shape_mismatch, "weight tensor is malformed");
  return Matrix(n / m, m, w.data);
}

WeightTensor inverse_reshape(const Matrix& subvectors, const TensorShape& shape) {
  if (subvectors.size() != shape.numel())
    throw Error(Errc::shape_mismatch, "subvector matrix does not match the target shape");
  return WeightTensor(shape, subvectors.values());
}

}  // namespace lrvq
