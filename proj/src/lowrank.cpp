#include "lrvq/lowrank.hpp"

#include <string>

#include "lrvq/error.hpp"
#include "lrvq/linalg.hpp"

namespace lrvq {

std::string_view layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::cv3x3: return "cv";
    case LayerKind::pw1x1: return "pw";
    case LayerKind::fc: return "fc";
    case LayerKind::conv: return "conv";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "cv") return LayerKind::cv3x3;
  if (name == "pw") return LayerKind::pw1x1;
  if (name == "fc") return LayerKind::fc;
  if (name == "conv") return LayerKind::conv;
  throw Error(Errc::invalid_argument, "unknown layer kind '" + std::string(name) + "'");
}

double LayerSpec::he_variance() const noexcept {
  return 2.0 / static_cast<double>(shape.c_in * shape.k_h * shape.k_w);
}

void LayerSpec::validate() const {
  if (shape.numel() == 0) throw Error(Errc::shape_mismatch, "layer has an empty shape");
  const bool ok = [&] {
    switch (kind) {
      case LayerKind::cv3x3: return shape.k_h == 3 && shape.k_w == 3;
      case LayerKind::pw1x1:
      case LayerKind::fc: return shape.k_h == 1 && shape.k_w == 1;
      case LayerKind::conv: return true;
    }
    return false;
  }();
  if (!ok) {
    throw Error(Errc::shape_mismatch,
                std::string(layer_kind_name(kind)) + " layer has an incompatible kernel size");
  }
}

void LowRankPair::validate() const {
  if (d_tilde < 1 || d_tilde > m) throw Error(Errc::bad_dim, "d_tilde must lie in [1, m]");
  if (a.cols() != d_tilde || b.rows() != d_tilde || b.cols() != m) {
    throw Error(Errc::bad_dim, "low-rank factor shapes are inconsistent");
  }
}

LowRankPair init_lowrank(Rng& rng, const LayerSpec& spec, std::size_t m, std::size_t d_tilde,
                         double delta, VarianceMode mode) {
  if (m == 0 || d_tilde < 1 || d_tilde > m) {
    throw Error(Errc::bad_dim, "d_tilde=" + std::to_string(d_tilde) + " outside [1, " +
                                   std::to_string(m) + "]");
  }
  const std::size_t n = spec.numel();
  if (n % m != 0) throw Error(Errc::non_divisible, "m does not divide the layer size");
  const double var_b = mode == VarianceMode::paper ? 1.0 / static_cast<double>(m)
                                                   : 1.0 / static_cast<double>(d_tilde);
  Rng rng_a = rng.split(0);
  Rng rng_b = rng.split(1);
  LowRankPair p{normal_matrix(rng_a, n / m, d_tilde, 0.0, delta),
                normal_matrix(rng_b, d_tilde, m, 0.0, var_b), m, d_tilde};
  return p;
}

Matrix materialize(const LowRankPair& p) {
  p.validate();
  return matmul(p.a, p.b);
}

LowRankPair svd_factorize(const Matrix& w_r, std::size_t d_tilde) {
  const std::size_t r = std::min(w_r.rows(), w_r.cols());
  if (d_tilde < 1 || d_tilde > r) throw Error(Errc::bad_dim, "d_tilde exceeds min(rows, cols)");
  const Svd f = svd(w_r);
  LowRankPair p{Matrix(w_r.rows(), d_tilde), Matrix(d_tilde, w_r.cols()), w_r.cols(), d_tilde};
  for (std::size_t i = 0; i < w_r.rows(); ++i)
    for (std::size_t j = 0; j < d_tilde; ++j) p.a(i, j) = f.u(i, j) * f.s[j];
  for (std::size_t j = 0; j < d_tilde; ++j)
    for (std::size_t c = 0; c < w_r.cols(); ++c) p.b(j, c) = f.v(c, j);
  return p;
}

double approximation_error(const Matrix& w_r, const LowRankPair& p) {
  if (p.a.rows() != w_r.rows() || p.b.cols() != w_r.cols()) {
    throw Error(Errc::shape_mismatch, "low-rank pair does not match the weight matrix");
  }
  return frobenius_sq(w_r - materialize(p)) / static_cast<double>(w_r.rows());
}

}  // namespace lrvq
