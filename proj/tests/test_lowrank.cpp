#include <gtest/gtest.h>

#include <cmath>

#include "lrvq/error.hpp"
#include "lrvq/lowrank.hpp"
#include "lrvq/trainer.hpp"
#include "oracles.hpp"

using namespace lrvq;

namespace {

double variance(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

const LayerSpec kCv64{LayerKind::cv3x3, {64, 64, 3, 3}, true};

Matrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c) {
  Rng rng(seed);
  return normal_matrix(rng, r, c, 0.0, 1.0);
}

}  // namespace

TEST(LayerSpec, HeVariance) {
  EXPECT_DOUBLE_EQ(kCv64.he_variance(), 2.0 / 576.0);
  EXPECT_DOUBLE_EQ((LayerSpec{LayerKind::pw1x1, {8, 8, 1, 1}, true}).he_variance(), 0.25);
}

TEST(LayerSpec, KindShapeValidation) {
  EXPECT_THROW((LayerSpec{LayerKind::cv3x3, {4, 4, 1, 1}, true}).validate(), Error);
  EXPECT_THROW((LayerSpec{LayerKind::pw1x1, {4, 4, 3, 3}, true}).validate(), Error);
  EXPECT_NO_THROW((LayerSpec{LayerKind::conv, {64, 3, 7, 7}, false}).validate());
}

TEST(LayerKindNames, RoundTrip) {
  for (auto k : {LayerKind::cv3x3, LayerKind::pw1x1, LayerKind::fc, LayerKind::conv})
    EXPECT_EQ(parse_layer_kind(layer_kind_name(k)), k);
  EXPECT_THROW(parse_layer_kind("dw"), Error);
}

TEST(InitLowrank, AVarianceMatchesDelta) {
  Rng rng(1);
  const double delta = kCv64.he_variance();
  const LowRankPair p = init_lowrank(rng, kCv64, 9, 3, delta);
  ASSERT_EQ(p.a.rows(), 4096u);
  ASSERT_EQ(p.a.cols(), 3u);
  EXPECT_NEAR(variance(p.a.values()) / delta, 1.0, 0.1);
}

class BVariance : public ::testing::TestWithParam<std::pair<std::size_t, double>> {};

TEST_P(BVariance, PaperModeUsesOneOverM) {
  const auto [m, target] = GetParam();
  std::vector<double> pooled;
  for (std::uint64_t s = 0; s < 400; ++s) {
    Rng rng(s);
    const LowRankPair p = init_lowrank(rng, {LayerKind::pw1x1, {64, 36, 1, 1}, true}, m, m, 0.1);
    pooled.insert(pooled.end(), p.b.values().begin(), p.b.values().end());
  }
  EXPECT_NEAR(variance(pooled) / target, 1.0, 0.1);
}

INSTANTIATE_TEST_SUITE_P(Widths, BVariance,
                         ::testing::Values(std::pair<std::size_t, double>{9, 1.0 / 9.0},
                                           std::pair<std::size_t, double>{4, 0.25}));

TEST(InitLowrank, FaninModeUsesOneOverD) {
  std::vector<double> pooled;
  for (std::uint64_t s = 0; s < 300; ++s) {
    Rng rng(s);
    const LowRankPair p = init_lowrank(rng, kCv64, 9, 3, 0.1, VarianceMode::fanin_dtilde);
    pooled.insert(pooled.end(), p.b.values().begin(), p.b.values().end());
  }
  EXPECT_NEAR(variance(pooled) * 3.0, 1.0, 0.1);
}

TEST(InitLowrank, BadDim) {
  Rng rng(1);
  EXPECT_THROW(init_lowrank(rng, kCv64, 9, 0, 0.1), Error);
  EXPECT_THROW(init_lowrank(rng, kCv64, 9, 10, 0.1), Error);
  try {
    init_lowrank(rng, kCv64, 9, 0, 0.1);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_dim);
  }
}

TEST(InitLowrank, NonPositiveDeltaRejected) {
  Rng rng(1);
  EXPECT_THROW(init_lowrank(rng, kCv64, 9, 3, 0.0), Error);
}

// Product-variance identity: Var(W') = d * delta * Var(B), pooled over draws.
class MaterializedVariance : public ::testing::TestWithParam<std::tuple<std::size_t, VarianceMode>> {};

TEST_P(MaterializedVariance, MatchesProductIdentity) {
  const auto [d, mode] = GetParam();
  const double delta = kCv64.he_variance();
  std::vector<double> pooled;
  for (std::uint64_t s = 0; s < 60; ++s) {
    Rng rng(100 + s);
    const Matrix w = materialize(init_lowrank(rng, kCv64, 9, d, delta, mode));
    pooled.insert(pooled.end(), w.values().begin(), w.values().begin() + 2000);
  }
  const double var_b = mode == VarianceMode::paper ? 1.0 / 9.0 : 1.0 / static_cast<double>(d);
  const double expected = static_cast<double>(d) * delta * var_b;
  const double ratio = variance(pooled) / expected;
  EXPECT_GE(ratio, 0.85);
  EXPECT_LE(ratio, 1.15);
}

INSTANTIATE_TEST_SUITE_P(Modes, MaterializedVariance,
                         ::testing::Combine(::testing::Values<std::size_t>(1, 3, 9),
                                            ::testing::Values(VarianceMode::paper, VarianceMode::fanin_dtilde)));

TEST(Materialize, HandCheckedTwoByTwo) {
  LowRankPair p{Matrix(2, 2, std::vector<double>{1, 0, 0, 1}), Matrix(2, 9, 1.0), 9, 2};
  const Matrix w = materialize(p);
  ASSERT_EQ(w.rows(), 2u);
  for (std::size_t j = 0; j < 9; ++j) {
    EXPECT_EQ(w(0, j), 1.0);
    EXPECT_EQ(w(1, j), 1.0);
  }
  p.a(1, 1) = 3.0;
  EXPECT_EQ(materialize(p)(1, 4), 3.0);
}

TEST(Materialize, IdentityTransformIsExact) {
  const Matrix w_r = random_matrix(3, 20, 9);
  EXPECT_EQ(materialize({w_r, Matrix::identity(9), 9, 9}), w_r);
}

TEST(Materialize, MatchesTripleLoopOracle) {
  Rng rng(5);
  const LowRankPair p = init_lowrank(rng, kCv64, 9, 4, 0.01);
  const Matrix ref = oracle::triple_loop_matmul(p.a, p.b);
  const Matrix w = materialize(p);
  EXPECT_LE(frobenius_norm(w - ref), 1e-12 * frobenius_norm(ref));
}

TEST(SvdFactorize, RankTwoRecoveredExactly) {
  const Matrix w = matmul(random_matrix(1, 50, 2), random_matrix(2, 2, 9));
  EXPECT_LT(frobenius_norm(materialize(svd_factorize(w, 2)) - w), 1e-9);
}

TEST(SvdFactorize, FullRankIsLossless) {
  const Matrix w = random_matrix(4, 30, 9);
  EXPECT_LT(approximation_error(w, svd_factorize(w, 9)), 1e-12);
}

TEST(SvdFactorize, ErrorMatchesTailSingularValues) {
  const Matrix w = random_matrix(6, 100, 9);
  const auto s = oracle::singular_values(w);
  double tail = 0;
  for (Eigen::Index i = 3; i < s.size(); ++i) tail += s(i) * s(i);
  const LowRankPair p = svd_factorize(w, 3);
  EXPECT_NEAR(frobenius_norm(w - materialize(p)), std::sqrt(tail), 1e-9);
  EXPECT_EQ(p.a.cols(), 3u);
  EXPECT_EQ(p.b.rows(), 3u);
}

TEST(SvdFactorize, ErrorNonIncreasingInRankProperty) {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    const Matrix w = normal_matrix(rng, 20 + rng.uniform_index(50), 9, 0.0, 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t d = 1; d <= 9; ++d) {
      const double e = approximation_error(w, svd_factorize(w, d));
      EXPECT_LE(e, prev + 1e-12);
      prev = e;
    }
  }
}

TEST(SvdFactorize, RankBeyondShapeIsBadDim) {
  const Matrix w = random_matrix(4, 3, 9);
  try {
    svd_factorize(w, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_dim);
  }
  EXPECT_THROW(svd_factorize(w, 0), Error);
}

TEST(ApproximationError, ZeroTargetGivesProductEnergy) {
  Rng rng(9);
  const LowRankPair p = init_lowrank(rng, kCv64, 9, 3, 0.5);
  const Matrix w_r(p.a.rows(), 9);
  EXPECT_NEAR(approximation_error(w_r, p), frobenius_sq(materialize(p)) / static_cast<double>(p.a.rows()), 1e-12);
}

TEST(ApproximationError, MatchesElementwiseOracle) {
  Rng rng(10);
  const LowRankPair p = init_lowrank(rng, kCv64, 9, 5, 0.5);
  const Matrix w_r = normal_matrix(rng, p.a.rows(), 9, 0.0, 1.0);
  const double ref = oracle::sq_error(w_r, oracle::triple_loop_matmul(p.a, p.b)) / static_cast<double>(w_r.rows());
  EXPECT_NEAR(approximation_error(w_r, p), ref, 1e-10 * ref);
}

TEST(ApproximationError, ShapeMismatch) {
  Rng rng(1);
  const LowRankPair p = init_lowrank(rng, kCv64, 9, 3, 0.5);
  try {
    approximation_error(Matrix(10, 9), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
}

TEST(FitLowrank, FullRankReachesNegligibleError) {
  const Matrix w_r = random_matrix(12, 128, 9);
  ReconstructionConfig cfg;
  cfg.seed = 3;
  const double e1 = approximation_error(w_r, fit_lowrank(w_r, 1, cfg));
  const double e9 = approximation_error(w_r, fit_lowrank(w_r, 9, cfg));
  EXPECT_GT(e1, 0.1);
  EXPECT_LE(e9, 1e-6 * e1);
}

TEST(FitLowrank, LearnedRankOneApproachesSvd) {
  const Matrix w_r = random_matrix(13, 128, 9);
  const double svd_err = approximation_error(w_r, svd_factorize(w_r, 1));
  const double learned = approximation_error(w_r, fit_lowrank(w_r, 1, {}));
  EXPECT_GE(learned, svd_err - 1e-12);  // Eckart-Young lower bound
  EXPECT_LE(learned, svd_err * 1.01);
}
