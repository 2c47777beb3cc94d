#pragma once

#include <cstddef>
#include <vector>

#include "lrvq/matrix.hpp"

namespace lrvq {

inline constexpr double kDefaultRidge = 1e-10;

/// Unbiased sample covariance of the rows of x (cols x cols), symmetrised.
/// Throws Errc::too_few_rows for fewer than two rows.
Matrix covariance(const Matrix& x);

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j pairs with values[j]
};

/// Cyclic Jacobi eigendecomposition with a fixed (p, q) sweep order.
/// Throws Errc::not_symmetric if max |s - s^T| exceeds 1e-9 relative.
SymmetricEigen symmetric_eigen(const Matrix& s);

/// sum_i ln(max(lambda_i, 0) + ridge).
double logdet_psd(const Matrix& s, double ridge = kDefaultRidge);

struct Svd {
  Matrix u;                  // rows x r
  std::vector<double> s;     // r, descending
  Matrix v;                  // cols x r
};

/// Thin SVD by one-sided Jacobi rotations, r = min(rows, cols).
Svd svd(const Matrix& x);

/// Smallest r whose leading covariance eigenvalues explain at least
/// `variance_ratio` of the total variance. Zero-variance input returns 0.
std::size_t pca_intrinsic_dim(const Matrix& x, double variance_ratio);

}  // namespace lrvq
