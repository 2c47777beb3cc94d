#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "lrvq/linalg.hpp"
#include "lrvq/matrix.hpp"

namespace lrvq {

struct DimCandidate {
  std::size_t d_tilde = 0;
  std::vector<double> per_layer_logdet;
  /// k^(-2/m) m |Sigma|^(1/m) per layer; empty unless k values were supplied.
  std::vector<double> per_layer_bound;
  double score = 0.0;
};

enum class ScoreMode {
  log_sum,  // sum of ln|Sigma|
  raw_sum,  // sum of |Sigma|; only meaningful for small m
};

struct ScoreOptions {
  double ridge = kDefaultRidge;
  ScoreMode mode = ScoreMode::log_sum;
  /// Codebook size per layer for the bound column (optional).
  std::vector<std::size_t> k_per_layer;
};

/// exp(-(2/m) ln k + ln m + logdet / m). Singular Sigma with ridge 0 gives 0.
double ec_lower_bound(const Matrix& sigma, std::size_t k, std::size_t m, double ridge = 0.0);

/// Scores one candidate from the materialized W' of every quantized conv
/// layer. Each layer needs at least two rows; rank-deficient covariances are
/// kept finite by the ridge.
DimCandidate score_candidate(const std::vector<Matrix>& layers, std::size_t d_tilde,
                             const ScoreOptions& opts = {});

/// d of the minimal score; ties go to the smaller d.
std::size_t select_d(const std::vector<DimCandidate>& candidates);

/// Columns: d_tilde,layer_index,logdet,total,ec_bound (one row per layer).
void write_candidates_csv(std::ostream& os, const std::vector<DimCandidate>& candidates);

}  // namespace lrvq
