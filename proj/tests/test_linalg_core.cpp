#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <set>

#include "lrvq/error.hpp"
#include "lrvq/linalg.hpp"
#include "lrvq/matrix.hpp"
#include "lrvq/parallel.hpp"
#include "lrvq/rng.hpp"
#include "lrvq/tensor.hpp"
#include "oracles.hpp"

using namespace lrvq;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an lrvq::Error";
  return Errc::invalid_argument;
}

Matrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c) {
  Rng rng(seed);
  return normal_matrix(rng, r, c, 0.0, 1.0);
}

}  // namespace

// Published Philox4x32-10 known-answer vectors.
TEST(Philox, KnownAnswerZero) {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
  const auto out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiffer) {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u32() == b.next_u32();
  EXPECT_LT(same, 3);
}

TEST(Rng, SplitIsPureAndDistinct) {
  Rng root(9);
  Rng s1 = root.split(1);
  Rng s1_again = root.split(1);
  Rng s2 = root.split(2);
  const auto first = root.next_u64();
  Rng fresh(9);
  EXPECT_EQ(first, fresh.next_u64());  // split did not advance the parent
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 50; ++i) {
    const auto v = s1.next_u64();
    EXPECT_EQ(v, s1_again.next_u64());
    seen.insert(v);
    seen.insert(s2.next_u64());
  }
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Rng, UniformRanges) {
  Rng r(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = r.uniform_open_low();
    ASSERT_GT(v, 0.0);
    ASSERT_LE(v, 1.0);
    ASSERT_LT(r.uniform_index(7), 7u);
  }
}

TEST(Rng, UniformIndexCoversAllValues) {
  Rng r(11);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) ++counts[r.uniform_index(5)];
  for (int c : counts) EXPECT_NEAR(c, 1000, 150);
}

TEST(NormalMatrix, SampleMeanSeed7) {
  Rng rng(7);
  const Matrix x = normal_matrix(rng, 100, 100, 0.0, 1.0);
  const double mean = std::accumulate(x.values().begin(), x.values().end(), 0.0) / 1e4;
  EXPECT_GE(mean, -0.05);
  EXPECT_LE(mean, 0.05);
}

TEST(NormalMatrix, VarianceOneNinth) {
  Rng rng(7);
  const Matrix x = normal_matrix(rng, 100, 100, 0.0, 1.0 / 9.0);
  const double mean = std::accumulate(x.values().begin(), x.values().end(), 0.0) / 1e4;
  double var = 0;
  for (double v : x.values()) var += (v - mean) * (v - mean);
  var /= 1e4 - 1;
  EXPECT_GE(var, 0.10);
  EXPECT_LE(var, 0.122);
}

TEST(NormalMatrix, NonPositiveVarianceRejected) {
  Rng rng(1);
  EXPECT_EQ(code_of([&] { normal_matrix(rng, 2, 2, 0.0, 0.0); }), Errc::invalid_variance);
  EXPECT_EQ(code_of([&] { normal_matrix(rng, 2, 2, 0.0, -1.0); }), Errc::invalid_variance);
}

TEST(NormalMatrix, EmpiricalVarianceWithinTenPercent) {
  for (double target : {0.01, 0.5, 2.0}) {
    Rng rng(21);
    const Matrix x = normal_matrix(rng, 200, 50, 1.5, target);
    double mean = std::accumulate(x.values().begin(), x.values().end(), 0.0) / 1e4;
    double var = 0;
    for (double v : x.values()) var += (v - mean) * (v - mean);
    var /= 1e4 - 1;
    EXPECT_NEAR(var / target, 1.0, 0.1) << target;
    EXPECT_NEAR(mean, 1.5, 0.05);
  }
}

TEST(Matmul, MatchesTripleLoop) {
  const Matrix a = random_matrix(1, 13, 7), b = random_matrix(2, 7, 11);
  const Matrix ref = oracle::triple_loop_matmul(a, b);
  EXPECT_LT(max_abs_diff(matmul(a, b), ref), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_tn(a.transposed(), b), ref), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_nt(a, b.transposed()), ref), 1e-12);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_EQ(code_of([] { matmul(Matrix(2, 3), Matrix(2, 3)); }), Errc::shape_mismatch);
}

TEST(Reshape, SingleFilter) {
  WeightTensor w({1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Matrix m = reshape_to_subvectors(w, 9);
  ASSERT_EQ(m.rows(), 1u);
  ASSERT_EQ(m.cols(), 9u);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(m(0, i), static_cast<double>(i + 1));
}

TEST(Reshape, TwoFiltersRowMajor) {
  std::vector<double> v(18);
  std::iota(v.begin(), v.end(), 0.0);
  const Matrix m = reshape_to_subvectors(WeightTensor({2, 1, 3, 3}, v), 9);
  ASSERT_EQ(m.rows(), 2u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(m(0, i), v[i]);
    EXPECT_EQ(m(1, i), v[9 + i]);
  }
}

TEST(Reshape, ResNetLayerRowCount) {
  const Matrix m = reshape_to_subvectors(WeightTensor({64, 64, 3, 3}), 9);
  EXPECT_EQ(m.rows(), 4096u);
  EXPECT_EQ(m.cols(), 9u);
}

TEST(Reshape, NonDivisibleThrows) {
  EXPECT_EQ(code_of([] { reshape_to_subvectors(WeightTensor({1, 1, 3, 3}), 4); }), Errc::non_divisible);
  EXPECT_EQ(code_of([] { reshape_to_subvectors(WeightTensor({1, 1, 3, 3}), 0); }), Errc::non_divisible);
}

TEST(Reshape, RoundTripIsExactProperty) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const TensorShape s{1 + rng.uniform_index(8), 1 + rng.uniform_index(8), 1 + rng.uniform_index(3) * 2,
                        1 + rng.uniform_index(3) * 2};
    const Matrix vals = normal_matrix(rng, 1, s.numel(), 0.0, 1.0);
    const WeightTensor w(s, vals.values());
    for (std::size_t m = 1; m <= s.numel(); ++m) {
      if (s.numel() % m != 0) continue;
      ASSERT_EQ(inverse_reshape(reshape_to_subvectors(w, m), s), w);
    }
  }
}

TEST(Covariance, IdenticalRowsGiveZero) {
  Matrix x(5, 3);
  for (std::size_t r = 0; r < 5; ++r) x.row(r)[0] = 2, x.row(r)[1] = -1, x.row(r)[2] = 0.5;
  EXPECT_EQ(covariance(x), Matrix(3, 3));
}

TEST(Covariance, HandComputedTwoByOne) {
  const Matrix c = covariance(Matrix(2, 1, std::vector<double>{0, 2}));
  EXPECT_DOUBLE_EQ(c(0, 0), 2.0);
}

TEST(Covariance, GaussianNearIdentity) {
  Rng rng(17);
  const Matrix c = covariance(normal_matrix(rng, 20000, 4, 0.0, 1.0));
  EXPECT_LT(max_abs_diff(c, Matrix::identity(4)), 0.05);
}

TEST(Covariance, TooFewRows) {
  EXPECT_EQ(code_of([] { covariance(Matrix(1, 3)); }), Errc::too_few_rows);
}

TEST(Covariance, MatchesEigenOracle) {
  const Matrix x = random_matrix(8, 40, 6);
  const Matrix c = covariance(x);
  EXPECT_LT(max_abs_diff(c, oracle::from_eigen(oracle::covariance(x))), 1e-12);
  EXPECT_EQ(c, c.transposed());
}

TEST(Covariance, PositiveSemidefiniteProperty) {
  Rng rng(44);
  for (int t = 0; t < 30; ++t) {
    const std::size_t cols = 1 + rng.uniform_index(9);
    const Matrix x = normal_matrix(rng, 2 + rng.uniform_index(5), cols, 0.0, 1.0);  // often rank-deficient
    const Matrix c = covariance(x);
    for (int k = 0; k < 10; ++k) {
      const Matrix v = normal_matrix(rng, cols, 1, 0.0, 1.0);
      const double q = matmul(v.transposed(), matmul(c, v))(0, 0);
      EXPECT_GE(q, -1e-9 * frobenius_sq(v));
    }
  }
}

TEST(LogdetPsd, Identity) { EXPECT_NEAR(logdet_psd(Matrix::identity(3), 0.0), 0.0, 1e-15); }

TEST(LogdetPsd, DeterminantOne) {
  Matrix d(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 0.5;
  EXPECT_NEAR(logdet_psd(d, 0.0), 0.0, 1e-15);
}

TEST(LogdetPsd, SingularWithRidgeIsFinite) {
  Matrix s(3, 3, 1.0);  // rank 1
  const double v = logdet_psd(s, 1e-10);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, std::log(3.0 + 1e-10) + 2 * std::log(1e-10), 1e-6);
}

TEST(LogdetPsd, BlockDiagonalAdditivityProperty) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = covariance(normal_matrix(rng, 30, 1 + rng.uniform_index(6), 0.0, 1.0));
    const Matrix b = covariance(normal_matrix(rng, 30, 1 + rng.uniform_index(6), 0.0, 2.0));
    EXPECT_NEAR(logdet_psd(a) + logdet_psd(b), logdet_psd(block_diag(a, b)), 1e-9);
  }
}

TEST(LogdetPsd, MatchesEigenOracle) {
  const Matrix c = covariance(random_matrix(5, 50, 9));
  EXPECT_NEAR(logdet_psd(c), oracle::logdet(oracle::to_eigen(c), kDefaultRidge), 1e-9);
}

TEST(SymmetricEigen, MatchesEigenOracle) {
  const Matrix c = covariance(random_matrix(6, 100, 18));
  const auto eig = symmetric_eigen(c);
  const auto ref = oracle::eigenvalues_desc(oracle::to_eigen(c));
  for (std::size_t i = 0; i < 18; ++i) EXPECT_NEAR(eig.values[i], ref(static_cast<Eigen::Index>(i)), 1e-10);
  // S v = lambda v
  const Matrix sv = matmul(c, eig.vectors);
  for (std::size_t j = 0; j < 18; ++j)
    for (std::size_t i = 0; i < 18; ++i) EXPECT_NEAR(sv(i, j), eig.values[j] * eig.vectors(i, j), 1e-9);
}

TEST(SymmetricEigen, RejectsAsymmetric) {
  Matrix s = Matrix::identity(2);
  s(0, 1) = 1.0;
  EXPECT_EQ(code_of([&] { symmetric_eigen(s); }), Errc::not_symmetric);
}

TEST(Svd, ReconstructionProperty) {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = normal_matrix(rng, 1 + rng.uniform_index(40), 1 + rng.uniform_index(12), 0.0, 1.0);
    const Svd d = svd(x);
    Matrix us = d.u;
    for (std::size_t r = 0; r < us.rows(); ++r)
      for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= d.s[c];
    const Matrix back = matmul_nt(us, d.v);
    EXPECT_LE(frobenius_norm(back - x), 1e-9 * std::max(frobenius_norm(x), 1e-300));
    for (std::size_t i = 1; i < d.s.size(); ++i) EXPECT_GE(d.s[i - 1], d.s[i]);
  }
}

TEST(Svd, SingularValuesMatchEigenOracle) {
  const Matrix x = random_matrix(12, 100, 9);
  const Svd d = svd(x);
  const auto ref = oracle::singular_values(x);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(d.s[i], ref(static_cast<Eigen::Index>(i)), 1e-10);
}

TEST(PcaIntrinsicDim, ExactRankThree) {
  const Matrix x = matmul(random_matrix(1, 1000, 3), random_matrix(2, 3, 9));
  EXPECT_EQ(pca_intrinsic_dim(x, 0.9999), 3u);
}

TEST(PcaIntrinsicDim, FullRankGaussian) {
  EXPECT_EQ(pca_intrinsic_dim(random_matrix(3, 1000, 9), 0.9999), 9u);
}

TEST(PcaIntrinsicDim, SingleNonzeroColumn) {
  Matrix x(50, 9);
  Rng rng(4);
  for (std::size_t r = 0; r < 50; ++r) x(r, 4) = rng.normal();
  EXPECT_EQ(pca_intrinsic_dim(x, 0.9999), 1u);
}

TEST(PcaIntrinsicDim, RatioOutOfRange) {
  const Matrix x = random_matrix(3, 10, 2);
  EXPECT_EQ(code_of([&] { pca_intrinsic_dim(x, 0.0); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([&] { pca_intrinsic_dim(x, 1.5); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { pca_intrinsic_dim(Matrix(1, 3), 0.9); }), Errc::too_few_rows);
}

TEST(PcaIntrinsicDim, MatchesEigenOracleOnMixedSpectra) {
  Rng rng(77);
  for (int t = 0; t < 20; ++t) {
    const std::size_t r = 1 + rng.uniform_index(6);
    Matrix x = matmul(normal_matrix(rng, 300, r, 0.0, 1.0), normal_matrix(rng, r, 8, 0.0, 1.0));
    x = x + normal_matrix(rng, 300, 8, 0.0, 1e-4);
    for (double ratio : {0.9, 0.99, 0.9999})
      EXPECT_EQ(pca_intrinsic_dim(x, ratio), oracle::pca_dim(x, ratio)) << t << ' ' << ratio;
  }
}

TEST(Parallel, EveryTaskRunsOnce) {
  for (std::size_t threads : {1u, 3u, 8u}) {
    set_thread_count(threads);
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) ASSERT_EQ(h.load(), 1);
  }
  set_thread_count(1);
}

TEST(Parallel, PropagatesExceptions) {
  set_thread_count(4);
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 37) throw std::runtime_error("boom");
               }),
               std::runtime_error);
  set_thread_count(1);
}
