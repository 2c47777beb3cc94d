#include "lrvq/dimsearch.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "lrvq/error.hpp"

namespace lrvq {

double ec_lower_bound(const Matrix& sigma, std::size_t k, std::size_t m, double ridge) {
  if (k < 1) throw Error(Errc::invalid_argument, "k must be at least 1");
  if (sigma.rows() != m || sigma.cols() != m)
    throw Error(Errc::shape_mismatch, "sigma must be m x m");
  const double logdet = logdet_psd(sigma, ridge);
  if (logdet == -std::numeric_limits<double>::infinity()) return 0.0;
  const double md = static_cast<double>(m);
  return std::exp(-2.0 / md * std::log(static_cast<double>(k)) + std::log(md) + logdet / md);
}

DimCandidate score_candidate(const std::vector<Matrix>& layers, std::size_t d_tilde,
                             const ScoreOptions& opts) {
  if (!opts.k_per_layer.empty() && opts.k_per_layer.size() != layers.size())
    throw Error(Errc::invalid_argument, "one k value per layer is required");
  DimCandidate out;
  out.d_tilde = d_tilde;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix& w = layers[l];
    if (w.rows() < 2) {
      throw Error(Errc::too_few_rows, "layer " + std::to_string(l) + " has " +
                                          std::to_string(w.rows()) + " subvectors of width " +
                                          std::to_string(w.cols()));
    }
    const Matrix sigma = covariance(w);
    const double logdet = logdet_psd(sigma, opts.ridge);
    out.per_layer_logdet.push_back(logdet);
    out.score += opts.mode == ScoreMode::log_sum ? logdet : std::exp(logdet);
    if (!opts.k_per_layer.empty())
      out.per_layer_bound.push_back(ec_lower_bound(sigma, opts.k_per_layer[l], w.cols(), opts.ridge));
  }
  return out;
}

std::size_t select_d(const std::vector<DimCandidate>& candidates) {
  if (candidates.empty()) throw Error(Errc::empty_list, "no candidates to select from");
  const DimCandidate* best = &candidates.front();
  for (const auto& c : candidates) {
    if (c.score < best->score || (c.score == best->score && c.d_tilde < best->d_tilde)) best = &c;
  }
  return best->d_tilde;
}

void write_candidates_csv(std::ostream& os, const std::vector<DimCandidate>& candidates) {
  const auto old_precision = os.precision(17);
  os << "d_tilde,layer_index,logdet,total,ec_bound\n";
  for (const auto& c : candidates) {
    for (std::size_t l = 0; l < c.per_layer_logdet.size(); ++l) {
      os << c.d_tilde << ',' << l << ',' << c.per_layer_logdet[l] << ',' << c.score << ',';
      if (l < c.per_layer_bound.size()) os << c.per_layer_bound[l];
      os << '\n';
    }
  }
  os.precision(old_precision);
}

}  // namespace lrvq
