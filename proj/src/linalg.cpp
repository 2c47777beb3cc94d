#include "lrvq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lrvq/error.hpp"

namespace lrvq {

namespace {

constexpr int kMaxSweeps = 100;

void require_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) throw Error(Errc::not_symmetric, "matrix is not square");
  double scale = 0.0;
  double asym = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      scale = std::max(scale, std::abs(s(i, j)));
      asym = std::max(asym, std::abs(s(i, j) - s(j, i)));
    }
  }
  if (asym > 1e-9 * std::max(scale, 1.0)) {
    throw Error(Errc::not_symmetric, "max asymmetry exceeds tolerance");
  }
}

double off_diagonal_sq(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return acc;
}

}  // namespace

Matrix covariance(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) throw Error(Errc::too_few_rows, "covariance needs at least two rows");

  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  Matrix cov(d, d);
  std::vector<double> centred(d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) centred[c] = row[c] - mean[c];
    for (std::size_t i = 0; i < d; ++i) {
      double* out = cov.row(i).data();
      for (std::size_t j = 0; j < d; ++j) out[j] += centred[i] * centred[j];
    }
  }
  const double denom = static_cast<double>(n - 1);
  Matrix sym(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) sym(i, j) = 0.5 * (cov(i, j) + cov(j, i)) / denom;
  return sym;
}

SymmetricEigen symmetric_eigen(const Matrix& s) {
  require_symmetric(s);
  const std::size_t n = s.rows();
  Matrix a = s;
  Matrix v = Matrix::identity(n);

  const double total = frobenius_sq(a);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_sq(a) <= 1e-30 * total) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, j) = v(k, order[j]);
  }
  return out;
}

double logdet_psd(const Matrix& s, double ridge) {
  const auto eig = symmetric_eigen(s);
  double acc = 0.0;
  for (double lambda : eig.values) acc += std::log(std::max(lambda, 0.0) + ridge);
  return acc;
}

Svd svd(const Matrix& x) {
  if (x.rows() < x.cols()) {
    Svd t = svd(x.transposed());
    return Svd{std::move(t.v), std::move(t.s), std::move(t.u)};
  }
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  // Columns of `w` converge to U * diag(s).
  Matrix w = x.transposed();  // row j holds column j of x
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        auto wi = w.row(i);
        auto wj = w.row(j);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          alpha += wi[k] * wi[k];
          beta += wj[k] * wj[k];
          gamma += wi[k] * wj[k];
        }
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double a = wi[k];
          const double b = wj[k];
          wi[k] = c * a - sn * b;
          wj[k] = sn * a + c * b;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double a = v(k, i);
          const double b = v(k, j);
          v(k, i) = c * a - sn * b;
          v(k, j) = sn * a + c * b;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (double e : w.row(j)) acc += e * e;
    norms[j] = std::sqrt(acc);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });

  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.s[j] = norms[src];
    const auto col = w.row(src);
    for (std::size_t k = 0; k < m; ++k) out.u(k, j) = norms[src] > 0.0 ? col[k] / norms[src] : 0.0;
    for (std::size_t k = 0; k < n; ++k) out.v(k, j) = v(k, src);
  }
  return out;
}

std::size_t pca_intrinsic_dim(const Matrix& x, double variance_ratio) {
  if (!(variance_ratio > 0.0 && variance_ratio <= 1.0)) {
    throw Error(Errc::invalid_argument, "variance ratio must lie in (0, 1]");
  }
  const auto eig = symmetric_eigen(covariance(x));
  double total = 0.0;
  for (double l : eig.values) total += std::max(l, 0.0);
  if (total <= 0.0) return 0;
  double cum = 0.0;
  for (std::size_t r = 0; r < eig.values.size(); ++r) {
    cum += std::max(eig.values[r], 0.0);
    if (cum >= variance_ratio * total) return r + 1;
  }
  return eig.values.size();
}

}  // namespace lrvq
