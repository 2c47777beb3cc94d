#include "lrvq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "lrvq/error.hpp"
#include "lrvq/linalg.hpp"
#include "lrvq/lowrank.hpp"
#include "lrvq/tensor.hpp"

namespace lrvq {

WeightErrors weight_space_errors(const ToyNet& dense, const CompressionRegime& regime, std::size_t d_tilde,
                                 Rng& rng, const KMeansOptions& opts) {
  double ea = 0.0, ec = 0.0, er = 0.0;
  std::size_t rows = 0;
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    const NetLayer& layer = dense.layers[l];
    if (layer.spec.kind != LayerKind::cv3x3 || !layer.spec.quantize) continue;
    const std::size_t m = regime.m_cv;
    const Matrix w_r = reshape_to_subvectors(WeightTensor(layer.spec.shape, layer.effective_weights()), m);
    // a layer with fewer rows than d is already reproduced exactly at its row count
    const LowRankPair pair = svd_factorize(w_r, std::min({d_tilde, w_r.rows(), m}));
    Rng layer_rng = rng.split(l);
    const KMeansResult km = kmeans_fit(layer_rng, pair.a, clamp_k(regime.k_cv, w_r.rows()), opts);
    const Matrix w_prime = materialize(pair);
    const Matrix w_hat = matmul(decode(km.codebook, km.codes), pair.b);
    ea += frobenius_sq(w_r - w_prime);
    ec += frobenius_sq(w_prime - w_hat);
    er += frobenius_sq(w_r - w_hat);
    rows += w_r.rows();
  }
  if (rows == 0) throw Error(Errc::empty_list, "network has no quantized cv layers");
  const double n = static_cast<double>(rows);
  return {ea / n, ec / n, er / n};
}

TrainConfig default_finetune_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 9;
  cfg.optimizer = OptimizerKind::adam;
  cfg.lr = 1e-3;
  cfg.schedule = LrSchedule::cosine;
  cfg.seed = seed;
  return cfg;
}

ToyPipeline toy_pipeline(std::uint64_t seed) {
  ToyPipeline p;
  p.data.seed = seed;
  p.data.n_classes = 10;
  p.data.n_train = 2000;
  p.data.n_test = 1000;
  p.data.motif = 4;
  p.sweep.seed = seed;
  p.sweep.dense_cfg.epochs = 10;
  p.sweep.dense_cfg.seed = seed + 2;
  p.sweep.lrr_cfg = p.sweep.dense_cfg;
  p.sweep.finetune_cfg = default_finetune_config(seed + 4);
  p.sweep.finetune_cfg.epochs = 12;
  return p;
}

std::vector<Matrix> quantized_conv_subvectors(const ToyNet& lrr) {
  std::vector<Matrix> out;
  for (const NetLayer& layer : lrr.layers) {
    if (!layer.spec.quantize || layer.spec.kind == LayerKind::fc) continue;
    if (const auto* p = std::get_if<LowRankPair>(&layer.params)) out.push_back(materialize(*p));
  }
  return out;
}

DimCandidate score_network(const ToyNet& lrr, const CompressionRegime& regime) {
  ScoreOptions opts;
  for (const NetLayer& layer : lrr.layers) {
    if (!layer.spec.quantize || layer.spec.kind == LayerKind::fc) continue;
    if (std::holds_alternative<LowRankPair>(layer.params))
      opts.k_per_layer.push_back(clamp_k(regime.k_for(layer.spec.kind), layer.spec.numel() / layer.m));
  }
  return score_candidate(quantized_conv_subvectors(lrr), regime.d_cv, opts);
}

ToyNet train_dense_stage(const SyntheticDataset& data, const SweepConfig& cfg) {
  Rng init = Rng(cfg.seed).split(SweepStreams::dense_init);
  return train(make_dense_net(init, data.config.n_classes), data, cfg.dense_cfg).net;
}

ToyNet train_lrr_stage(const SyntheticDataset& data, const SweepConfig& cfg, std::size_t d_tilde,
                       std::vector<EpochRecord>* history) {
  const CompressionRegime regime = toy_regime(d_tilde, cfg.d_pw);
  Rng init = Rng(cfg.seed).split(SweepStreams::lrr_init);
  TrainResult r = train(make_lowrank_net(init, data.config.n_classes, regime, cfg.variance), data, cfg.lrr_cfg);
  if (history) *history = std::move(r.history);
  return std::move(r.net);
}

ToyNet quantize_stage(const ToyNet& lrr, const SweepConfig& cfg, const CompressionRegime& regime) {
  Rng km = Rng(cfg.seed).split(SweepStreams::kmeans);
  return quantize_net(lrr, km, regime, cfg.kmeans);
}

SweepResult sweep_dtilde(const SyntheticDataset& data, const SweepConfig& cfg,
                         const std::function<void(const TradeoffPoint&)>& progress) {
  if (cfg.d_range.empty()) throw Error(Errc::empty_list, "empty d range");
  const Rng root(cfg.seed);
  SweepResult result;
  result.dense = train_dense_stage(data, cfg);
  result.dense_accuracy = evaluate(result.dense, data);
  for (std::size_t d : cfg.d_range) {
    if (d < 1 || d > toy_regime().m_cv) throw Error(Errc::bad_dim, "d outside [1, m_cv]");
    const CompressionRegime regime = toy_regime(d, cfg.d_pw);
    SweepRun run;
    run.d_tilde = d;
    run.lrr = train_lrr_stage(data, cfg, d);
    run.quantized = quantize_stage(run.lrr, cfg, regime);
    run.finetuned = train(run.quantized, data, cfg.finetune_cfg).net;

    Rng wk = root.split(SweepStreams::weight_kmeans);
    const WeightErrors err = weight_space_errors(result.dense, regime, d, wk, cfg.kmeans);
    TradeoffPoint p;
    p.d_tilde = d;
    p.e_a = err.e_a;
    p.e_c = err.e_c;
    p.e_r = err.e_r;
    p.lrr_accuracy = evaluate(run.lrr, data);
    p.quantized_accuracy = evaluate(run.quantized, data);
    p.finetuned_accuracy = evaluate(run.finetuned, data);
    result.candidates.push_back(score_network(run.lrr, regime));
    result.points.push_back(p);
    result.runs.push_back(std::move(run));
    if (progress) progress(p);
  }
  return result;
}

std::vector<IntrinsicRow> intrinsic_dim_report(const ToyNet& dense, const ToyNet& lrr, double ratio) {
  if (dense.n_classes != lrr.n_classes) throw Error(Errc::shape_mismatch, "nets have different heads");
  std::vector<IntrinsicRow> rows;
  for (std::size_t l = 0; l < ToyNet::kLayers; ++l) {
    const auto* pair = std::get_if<LowRankPair>(&lrr.layers[l].params);
    if (pair == nullptr) continue;
    const NetLayer& d = dense.layers[l];
    IntrinsicRow row;
    row.layer = l;
    row.m = pair->m;
    row.standard_dim =
        pca_intrinsic_dim(reshape_to_subvectors(WeightTensor(d.spec.shape, d.effective_weights()), pair->m), ratio);
    row.lrr_dim = pca_intrinsic_dim(materialize(*pair), ratio);
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(Errc::dim_mismatch, "rank correlation needs equal lengths");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

SearchReport search_only_report(const std::vector<DimCandidate>& candidates) {
  SearchReport r;
  r.predicted_best = select_d(candidates);
  for (const auto& c : candidates) {
    r.d_values.push_back(c.d_tilde);
    r.scores.push_back(c.score);
    r.finetuned_accuracy.push_back(std::nullopt);
  }
  return r;
}

SearchReport validate_search(const std::vector<TradeoffPoint>& sweep, const std::vector<DimCandidate>& candidates) {
  if (sweep.size() != candidates.size())
    throw Error(Errc::grid_mismatch, "sweep has " + std::to_string(sweep.size()) + " points but there are " +
                                         std::to_string(candidates.size()) + " candidates");
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (sweep[i].d_tilde != candidates[i].d_tilde)
      throw Error(Errc::grid_mismatch, "d grids differ at position " + std::to_string(i));
  }
  SearchReport r = search_only_report(candidates);
  std::vector<double> acc;
  std::size_t best = 0;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    r.finetuned_accuracy[i] = sweep[i].finetuned_accuracy;
    acc.push_back(sweep[i].finetuned_accuracy);
    const bool better = sweep[i].finetuned_accuracy > sweep[best].finetuned_accuracy ||
                        (sweep[i].finetuned_accuracy == sweep[best].finetuned_accuracy &&
                         sweep[i].d_tilde < sweep[best].d_tilde);
    if (better) best = i;
  }
  r.empirical_best = sweep[best].d_tilde;
  r.rank_correlation = spearman(r.scores, acc);
  const auto gap = r.predicted_best > *r.empirical_best ? r.predicted_best - *r.empirical_best
                                                        : *r.empirical_best - r.predicted_best;
  r.within_one = gap <= 1;
  return r;
}

std::vector<TradeoffPoint> points_in_range(const std::vector<TradeoffPoint>& points, std::size_t lo,
                                           std::size_t hi) {
  std::vector<TradeoffPoint> out;
  for (const auto& p : points)
    if (p.d_tilde >= lo && p.d_tilde <= hi) out.push_back(p);
  return out;
}

std::vector<DimCandidate> candidates_in_range(const std::vector<DimCandidate>& c, std::size_t lo, std::size_t hi) {
  std::vector<DimCandidate> out;
  for (const auto& x : c)
    if (x.d_tilde >= lo && x.d_tilde <= hi) out.push_back(x);
  return out;
}

void write_tradeoff_csv(std::ostream& os, const std::vector<TradeoffPoint>& points) {
  const auto old = os.precision(17);
  os << "d_tilde,e_a,e_c,e_r,lrr_acc,q_acc,ft_acc\n";
  for (const auto& p : points) {
    os << p.d_tilde << ',' << p.e_a << ',' << p.e_c << ',' << p.e_r << ',' << p.lrr_accuracy << ','
       << p.quantized_accuracy << ',' << p.finetuned_accuracy << '\n';
  }
  os.precision(old);
}

void write_intrinsic_csv(std::ostream& os, const std::vector<IntrinsicRow>& rows) {
  os << "layer,standard_dim,lrr_dim\n";
  for (const auto& r : rows) os << r.layer << ',' << r.standard_dim << ',' << r.lrr_dim << '\n';
}

void write_search_csv(std::ostream& os, const SearchReport& report) {
  const auto old = os.precision(17);
  os << "d_tilde,score,ft_acc,predicted_best,empirical_best\n";
  for (std::size_t i = 0; i < report.d_values.size(); ++i) {
    const std::size_t d = report.d_values[i];
    os << d << ',' << report.scores[i] << ',';
    if (report.finetuned_accuracy[i]) os << *report.finetuned_accuracy[i];
    os << ',' << (d == report.predicted_best ? 1 : 0) << ',';
    if (report.empirical_best) os << (d == *report.empirical_best ? 1 : 0);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace lrvq
