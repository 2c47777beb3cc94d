#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lrvq/dataset.hpp"
#include "lrvq/dimsearch.hpp"
#include "lrvq/regime.hpp"
#include "lrvq/toynet.hpp"
#include "lrvq/trainer.hpp"
#include "lrvq/vq.hpp"

namespace lrvq {

struct TradeoffPoint {
  std::size_t d_tilde = 0;
  double e_a = 0.0;  // ||W_r - W'||^2 per subvector
  double e_c = 0.0;  // ||W' - W_hat||^2 per subvector
  double e_r = 0.0;  // ||W_r - W_hat||^2 per subvector
  double lrr_accuracy = 0.0;
  double quantized_accuracy = 0.0;
  double finetuned_accuracy = 0.0;
};

struct WeightErrors {
  double e_a = 0.0;
  double e_c = 0.0;
  double e_r = 0.0;
};

/// Weight-space errors of the cv layers of a dense reference net at rank d:
/// W' is the truncated SVD of each layer's subvector matrix and W_hat its
/// k-means reconstruction. Errors are pooled over layers and divided by the
/// total subvector count. Because the residual of W' and the clustering
/// error live in orthogonal row spaces, e_r = e_a + e_c.
WeightErrors weight_space_errors(const ToyNet& dense, const CompressionRegime& regime, std::size_t d_tilde,
                                 Rng& rng, const KMeansOptions& opts = {});

struct SweepConfig {
  std::vector<std::size_t> d_range{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t d_pw = 4;
  TrainConfig dense_cfg;
  TrainConfig lrr_cfg;
  TrainConfig finetune_cfg;
  KMeansOptions kmeans;
  std::uint64_t seed = 1;
  VarianceMode variance = VarianceMode::paper;
};

/// Default fine-tuning schedule: Adam, lr 1e-3, cosine, 9 epochs.
TrainConfig default_finetune_config(std::uint64_t seed);

/// Calibrated toy setup shared by the CLI and the acceptance suite.
struct ToyPipeline {
  DatasetConfig data;
  SweepConfig sweep;
};
ToyPipeline toy_pipeline(std::uint64_t seed = 1);

/// Candidate window of the dimension search.
inline constexpr std::size_t kSearchLo = 3;
inline constexpr std::size_t kSearchHi = 7;

struct SweepRun {
  std::size_t d_tilde = 0;
  ToyNet lrr;
  ToyNet quantized;
  ToyNet finetuned;
};

struct SweepResult {
  ToyNet dense;
  double dense_accuracy = 0.0;
  std::vector<TradeoffPoint> points;
  std::vector<DimCandidate> candidates;
  std::vector<SweepRun> runs;
};

/// Streams used for each stage, derived from the sweep seed.
struct SweepStreams {
  static constexpr std::uint64_t dense_init = 1;
  static constexpr std::uint64_t lrr_init = 2;
  static constexpr std::uint64_t kmeans = 3;
  static constexpr std::uint64_t weight_kmeans = 4;
};

/// Pipeline stages; each draws from its own stream of the sweep seed, so
/// running them one by one reproduces the sweep exactly.
ToyNet train_dense_stage(const SyntheticDataset& data, const SweepConfig& cfg);
ToyNet train_lrr_stage(const SyntheticDataset& data, const SweepConfig& cfg, std::size_t d_tilde,
                       std::vector<EpochRecord>* history = nullptr);
ToyNet quantize_stage(const ToyNet& lrr, const SweepConfig& cfg, const CompressionRegime& regime);

/// Trains one LRR net per d (same init stream), quantizes, fine-tunes and
/// records errors, accuracies and the search score of the trained W'.
/// `progress` is called after each d with the finished point.
SweepResult sweep_dtilde(const SyntheticDataset& data, const SweepConfig& cfg,
                         const std::function<void(const TradeoffPoint&)>& progress = {});

/// Materialized W' of every low-rank layer the regime quantizes, in layer order.
std::vector<Matrix> quantized_conv_subvectors(const ToyNet& lrr);
/// Search score of a trained LRR net (k per layer filled in for the bound).
DimCandidate score_network(const ToyNet& lrr, const CompressionRegime& regime);

struct IntrinsicRow {
  std::size_t layer = 0;
  std::size_t m = 0;
  std::size_t standard_dim = 0;
  std::size_t lrr_dim = 0;
};

inline constexpr double kIntrinsicRatio = 0.9999;

/// For every low-rank layer of `lrr`: PCA dimension of the dense filters cut
/// into subvectors of the same width, and of the materialized W'.
std::vector<IntrinsicRow> intrinsic_dim_report(const ToyNet& dense, const ToyNet& lrr,
                                               double ratio = kIntrinsicRatio);

struct SearchReport {
  std::vector<std::size_t> d_values;
  std::vector<double> scores;
  std::vector<std::optional<double>> finetuned_accuracy;
  std::optional<double> rank_correlation;  // Spearman; empty when undefined
  std::size_t predicted_best = 0;          // argmin score
  std::optional<std::size_t> empirical_best;  // argmax fine-tuned accuracy
  bool within_one = false;
};

/// Spearman correlation with average ranks; empty if either side is constant
/// or shorter than two.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Throws Errc::grid_mismatch when the d grids differ.
SearchReport validate_search(const std::vector<TradeoffPoint>& sweep, const std::vector<DimCandidate>& candidates);
/// Report without accuracies (search only).
SearchReport search_only_report(const std::vector<DimCandidate>& candidates);

std::vector<TradeoffPoint> points_in_range(const std::vector<TradeoffPoint>& points, std::size_t lo, std::size_t hi);
std::vector<DimCandidate> candidates_in_range(const std::vector<DimCandidate>& c, std::size_t lo, std::size_t hi);

void write_tradeoff_csv(std::ostream& os, const std::vector<TradeoffPoint>& points);
void write_intrinsic_csv(std::ostream& os, const std::vector<IntrinsicRow>& rows);
/// Columns: d_tilde,score,ft_acc,predicted_best,empirical_best.
void write_search_csv(std::ostream& os, const SearchReport& report);

}  // namespace lrvq
