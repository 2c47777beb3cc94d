#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "lrvq/lowrank.hpp"
#include "lrvq/matrix.hpp"
#include "lrvq/rng.hpp"

namespace lrvq {

struct Codebook {
  Matrix centroids;  // k x dim

  std::size_t k() const noexcept { return centroids.rows(); }
  std::size_t dim() const noexcept { return centroids.cols(); }
  bool operator==(const Codebook&) const = default;
};

struct Codes {
  std::vector<std::uint32_t> assignments;

  std::size_t size() const noexcept { return assignments.size(); }
  bool operator==(const Codes&) const = default;
};

/// Codebook, codes and (until merged) the linear transform B of one layer.
struct QuantizedLayer {
  Codebook codebook;
  Codes codes;
  std::optional<Matrix> transform;  // B (d x m); empty once merged
  LayerSpec spec;
  std::size_t m = 0;

  bool merged() const noexcept { return !transform.has_value(); }
  std::size_t n_subvectors() const noexcept { return spec.numel() / m; }
  void validate() const;
};

/// Nearest centroid per row; ties go to the lowest centroid index.
Codes assign(const Matrix& a, const Codebook& cb);

struct KMeansOptions {
  std::size_t iters = 100;
  std::size_t restarts = 1;  // best final objective wins
};

struct KMeansResult {
  Codebook codebook;
  Codes codes;
  /// Objective sum_p ||a_p - c_{I_p}||^2 after every iteration, then once more
  /// after the closing assignment. Non-increasing.
  std::vector<double> objective;
  bool converged = false;
};

/// Lloyd iterations from k-means++ seeds. Empty clusters seize the point
/// farthest from its centroid (taken from clusters that keep a member).
KMeansResult kmeans_fit(Rng& rng, const Matrix& a, std::size_t k, const KMeansOptions& opts = {});

/// min(k, floor(n_subvectors / 4)); Errc::too_few_subvectors when n < 4.
std::size_t clamp_k(std::size_t k, std::size_t n_subvectors);

Matrix decode(const Codebook& cb, const Codes& codes);

/// decode(C, I) x B. Errc::already_merged for merged layers.
Matrix reconstruct(const QuantizedLayer& q);

/// C' = C x B; the result stores C' and drops B.
QuantizedLayer merge_codebook(const QuantizedLayer& q);

/// Approximation of W' in either representation.
Matrix decoded_weights(const QuantizedLayer& q);

/// ||W' - W'_hat||_F^2 / rows.
double clustering_error(const Matrix& w_prime, const QuantizedLayer& q);

/// Clusters the rows of A with k clamped to the subvector count.
QuantizedLayer quantize_lowrank(Rng& rng, const LowRankPair& pair, const LayerSpec& spec,
                                std::size_t k, const KMeansOptions& opts = {});

/// Plain VQ of W_r (no transform); the result is already merged.
QuantizedLayer quantize_dense(Rng& rng, const Matrix& w_r, const LayerSpec& spec, std::size_t k,
                              const KMeansOptions& opts = {});

}  // namespace lrvq
