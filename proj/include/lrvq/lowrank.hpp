#pragma once

#include <cstddef>
#include <string_view>

#include "lrvq/matrix.hpp"
#include "lrvq/rng.hpp"
#include "lrvq/tensor.hpp"

namespace lrvq {

enum class LayerKind {
  cv3x3,  // 3x3 convolution
  pw1x1,  // pointwise convolution
  fc,     // fully connected, stored as (out, in, 1, 1)
  conv,   // any other convolution (e.g. a 7x7 stem); never quantized
};

std::string_view layer_kind_name(LayerKind kind) noexcept;
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::cv3x3;
  TensorShape shape;
  bool quantize = true;

  std::size_t numel() const noexcept { return shape.numel(); }
  /// He-style initializer variance 2 / (c_in * k_h * k_w).
  double he_variance() const noexcept;
  /// Throws Errc::shape_mismatch if the shape contradicts the kind.
  void validate() const;

  bool operator==(const LayerSpec&) const = default;
};

/// W' = A x B with A: (N/m x d), B: (d x m).
struct LowRankPair {
  Matrix a;
  Matrix b;
  std::size_t m = 0;
  std::size_t d_tilde = 0;

  /// Throws Errc::bad_dim when the factor shapes break the pair invariants.
  void validate() const;
};

enum class VarianceMode {
  paper,         // Var(B) = 1/m
  fanin_dtilde,  // Var(B) = 1/d, which keeps Var(W') = delta
};

/// A ~ N(0, delta), B ~ N(0, 1/m) (or 1/d). The A and B draws use separate
/// sub-streams of `rng`.
LowRankPair init_lowrank(Rng& rng, const LayerSpec& spec, std::size_t m, std::size_t d_tilde,
                         double delta, VarianceMode mode = VarianceMode::paper);

Matrix materialize(const LowRankPair& p);

/// Truncated SVD: A = U_d * S_d, B = V_d^T.
LowRankPair svd_factorize(const Matrix& w_r, std::size_t d_tilde);

/// ||W_r - A B||_F^2 / rows.
double approximation_error(const Matrix& w_r, const LowRankPair& p);

}  // namespace lrvq
