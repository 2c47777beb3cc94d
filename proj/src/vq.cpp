#include "lrvq/vq.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "lrvq/error.hpp"
#include "lrvq/parallel.hpp"

namespace lrvq {

namespace {

constexpr std::size_t kRowChunk = 256;

std::size_t chunk_count(std::size_t n) { return (n + kRowChunk - 1) / kRowChunk; }

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    acc += diff * diff;
  }
  return acc;
}

// Fills codes and distances; rows are independent so any worker split works.
void assign_into(const Matrix& a, const Matrix& centroids, std::vector<std::uint32_t>& codes,
                 std::vector<double>& dist) {
  const std::size_t n = a.rows();
  codes.resize(n);
  dist.resize(n);
  parallel_for(chunk_count(n), [&](std::size_t chunk) {
    const std::size_t end = std::min(n, (chunk + 1) * kRowChunk);
    for (std::size_t p = chunk * kRowChunk; p < end; ++p) {
      const auto row = a.row(p);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_q = 0;
      for (std::size_t q = 0; q < centroids.rows(); ++q) {
        const double d = squared_distance(row, centroids.row(q));
        if (d < best) {
          best = d;
          best_q = static_cast<std::uint32_t>(q);
        }
      }
      codes[p] = best_q;
      dist[p] = best;
    }
  });
}

double objective_of(const Matrix& a, const Matrix& centroids,
                    const std::vector<std::uint32_t>& codes) {
  const std::size_t n = a.rows();
  std::vector<double> partial(chunk_count(n), 0.0);
  parallel_for(partial.size(), [&](std::size_t chunk) {
    const std::size_t end = std::min(n, (chunk + 1) * kRowChunk);
    double acc = 0.0;
    for (std::size_t p = chunk * kRowChunk; p < end; ++p)
      acc += squared_distance(a.row(p), centroids.row(codes[p]));
    partial[chunk] = acc;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

Matrix kmeanspp_seed(Rng& rng, const Matrix& a, std::size_t k) {
  const std::size_t n = a.rows();
  const std::size_t dim = a.cols();
  Matrix centroids(k, dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t pick = rng.uniform_index(n);
  for (std::size_t q = 0; q < k; ++q) {
    if (q > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double cum = 0.0;
        pick = n - 1;
        for (std::size_t p = 0; p < n; ++p) {
          cum += d2[p];
          if (cum > target && d2[p] > 0.0) {
            pick = p;
            break;
          }
        }
        while (d2[pick] == 0.0 && pick > 0) --pick;
      } else {
        pick = rng.uniform_index(n);
      }
    }
    std::copy(a.row(pick).begin(), a.row(pick).end(), centroids.row(q).begin());
    for (std::size_t p = 0; p < n; ++p)
      d2[p] = std::min(d2[p], squared_distance(a.row(p), centroids.row(q)));
  }
  return centroids;
}

// Moves the farthest point of a multi-member cluster into each empty cluster.
void repair_empty(const Matrix& a, Matrix& centroids, std::vector<std::uint32_t>& codes,
                  std::vector<double>& dist) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> count(k, 0);
  for (auto c : codes) ++count[c];
  for (std::size_t q = 0; q < k; ++q) {
    if (count[q] != 0) continue;
    std::size_t victim = codes.size();
    double far = -1.0;
    for (std::size_t p = 0; p < codes.size(); ++p) {
      if (count[codes[p]] >= 2 && dist[p] > far) {
        far = dist[p];
        victim = p;
      }
    }
    if (victim == codes.size()) return;  // every cluster is a singleton
    --count[codes[victim]];
    codes[victim] = static_cast<std::uint32_t>(q);
    count[q] = 1;
    dist[victim] = 0.0;
    std::copy(a.row(victim).begin(), a.row(victim).end(), centroids.row(q).begin());
  }
}

// Shifted means c + sum(x - c) / n: clusters of identical rows stay exact.
void update_centroids(const Matrix& a, Matrix& centroids, const std::vector<std::uint32_t>& codes) {
  const std::size_t n = a.rows();
  const std::size_t k = centroids.rows();
  const std::size_t dim = centroids.cols();
  const std::size_t chunks = chunk_count(n);
  std::vector<Matrix> sums(chunks, Matrix(k, dim));
  std::vector<std::vector<std::size_t>> counts(chunks, std::vector<std::size_t>(k, 0));
  parallel_for(chunks, [&](std::size_t chunk) {
    const std::size_t end = std::min(n, (chunk + 1) * kRowChunk);
    for (std::size_t p = chunk * kRowChunk; p < end; ++p) {
      const std::uint32_t q = codes[p];
      ++counts[chunk][q];
      const auto row = a.row(p);
      const auto c = centroids.row(q);
      auto s = sums[chunk].row(q);
      for (std::size_t j = 0; j < dim; ++j) s[j] += row[j] - c[j];
    }
  });
  Matrix total(k, dim);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    for (std::size_t q = 0; q < k; ++q) {
      count[q] += counts[chunk][q];
      auto t = total.row(q);
      const auto s = sums[chunk].row(q);
      for (std::size_t j = 0; j < dim; ++j) t[j] += s[j];
    }
  }
  for (std::size_t q = 0; q < k; ++q) {
    if (count[q] == 0) continue;
    auto c = centroids.row(q);
    const auto t = total.row(q);
    for (std::size_t j = 0; j < dim; ++j) c[j] += t[j] / static_cast<double>(count[q]);
  }
}

KMeansResult kmeans_single(Rng& rng, const Matrix& a, std::size_t k, std::size_t iters) {
  KMeansResult result;
  Matrix centroids = kmeanspp_seed(rng, a, k);
  std::vector<std::uint32_t> codes;
  std::vector<std::uint32_t> previous;
  std::vector<double> dist;
  for (std::size_t it = 0; it < iters; ++it) {
    assign_into(a, centroids, codes, dist);
    repair_empty(a, centroids, codes, dist);
    if (codes == previous) {
      result.converged = true;
      break;
    }
    update_centroids(a, centroids, codes);
    result.objective.push_back(objective_of(a, centroids, codes));
    previous = codes;
  }
  assign_into(a, centroids, codes, dist);
  result.objective.push_back(objective_of(a, centroids, codes));
  result.codebook.centroids = std::move(centroids);
  result.codes.assignments = std::move(codes);
  return result;
}

}  // namespace

void QuantizedLayer::validate() const {
  if (m == 0 || spec.numel() % m != 0) throw Error(Errc::non_divisible, "bad subvector size");
  if (codes.size() != n_subvectors())
    throw Error(Errc::shape_mismatch, "code count does not match the layer");
  for (auto c : codes.assignments)
    if (c >= codebook.k()) throw Error(Errc::index_out_of_range, "code exceeds codebook size");
  if (merged()) {
    if (codebook.dim() != m) throw Error(Errc::shape_mismatch, "merged codebook must have m columns");
  } else if (transform->rows() != codebook.dim() || transform->cols() != m) {
    throw Error(Errc::shape_mismatch, "transform does not match the codebook");
  }
}

Codes assign(const Matrix& a, const Codebook& cb) {
  if (a.cols() != cb.dim()) throw Error(Errc::dim_mismatch, "subvector and centroid widths differ");
  if (cb.k() == 0) throw Error(Errc::invalid_argument, "empty codebook");
  Codes out;
  std::vector<double> dist;
  assign_into(a, cb.centroids, out.assignments, dist);
  return out;
}

KMeansResult kmeans_fit(Rng& rng, const Matrix& a, std::size_t k, const KMeansOptions& opts) {
  if (k < 1) throw Error(Errc::invalid_argument, "k must be at least 1");
  if (a.rows() < 1) throw Error(Errc::too_few_rows, "k-means needs at least one row");
  KMeansResult best;
  const std::size_t restarts = std::max<std::size_t>(opts.restarts, 1);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng run_rng = rng.split(r);
    KMeansResult run = kmeans_single(run_rng, a, k, opts.iters);
    if (r == 0 || run.objective.back() < best.objective.back()) best = std::move(run);
  }
  return best;
}

std::size_t clamp_k(std::size_t k, std::size_t n_subvectors) {
  if (n_subvectors < 4) {
    throw Error(Errc::too_few_subvectors,
                std::to_string(n_subvectors) + " subvectors cannot support the N/4 clamp");
  }
  return std::min(k, n_subvectors / 4);
}

Matrix decode(const Codebook& cb, const Codes& codes) {
  Matrix out(codes.size(), cb.dim());
  for (std::size_t p = 0; p < codes.size(); ++p) {
    const auto q = codes.assignments[p];
    if (q >= cb.k()) throw Error(Errc::index_out_of_range, "code " + std::to_string(q));
    std::copy(cb.centroids.row(q).begin(), cb.centroids.row(q).end(), out.row(p).begin());
  }
  return out;
}

Matrix reconstruct(const QuantizedLayer& q) {
  if (q.merged()) throw Error(Errc::already_merged, "layer has no transform left");
  return matmul(decode(q.codebook, q.codes), *q.transform);
}

QuantizedLayer merge_codebook(const QuantizedLayer& q) {
  if (q.merged()) throw Error(Errc::already_merged, "layer is already merged");
  QuantizedLayer out;
  out.codebook.centroids = matmul(q.codebook.centroids, *q.transform);
  out.codes = q.codes;
  out.spec = q.spec;
  out.m = q.m;
  return out;
}

Matrix decoded_weights(const QuantizedLayer& q) {
  return q.merged() ? decode(q.codebook, q.codes) : reconstruct(q);
}

double clustering_error(const Matrix& w_prime, const QuantizedLayer& q) {
  const Matrix approx = decoded_weights(q);
  if (approx.rows() != w_prime.rows() || approx.cols() != w_prime.cols())
    throw Error(Errc::shape_mismatch, "W' does not match the quantized layer");
  return frobenius_sq(w_prime - approx) / static_cast<double>(w_prime.rows());
}

QuantizedLayer quantize_lowrank(Rng& rng, const LowRankPair& pair, const LayerSpec& spec,
                                std::size_t k, const KMeansOptions& opts) {
  pair.validate();
  const std::size_t k_eff = clamp_k(k, pair.a.rows());
  KMeansResult fit = kmeans_fit(rng, pair.a, k_eff, opts);
  QuantizedLayer q{std::move(fit.codebook), std::move(fit.codes), pair.b, spec, pair.m};
  q.validate();
  return q;
}

QuantizedLayer quantize_dense(Rng& rng, const Matrix& w_r, const LayerSpec& spec, std::size_t k,
                              const KMeansOptions& opts) {
  const std::size_t k_eff = clamp_k(k, w_r.rows());
  KMeansResult fit = kmeans_fit(rng, w_r, k_eff, opts);
  QuantizedLayer q{std::move(fit.codebook), std::move(fit.codes), std::nullopt, spec, w_r.cols()};
  q.validate();
  return q;
}

}  // namespace lrvq
