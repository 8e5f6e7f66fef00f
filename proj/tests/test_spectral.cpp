#include <gtest/gtest.h>

#include <random>

#include "lorasdp/spectral.hpp"
#include "oracle.hpp"

using namespace lorasdp;

namespace {

ApplyFn dense_apply(const Eigen::MatrixXd& s) {
  return [s](std::span<const double> x, std::span<double> y) {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())) = s * xv;
  };
}

Eigen::MatrixXd random_sparse_symmetric(std::size_t n, double density, std::mt19937_64& rng) {
  return oracle::dense(SymmetricSparse{n, oracle::random_sym_entries(n, density, rng)}, n);
}

SdpProblem scalar_problem(double c, double b) {
  ConstraintSet a;
  a.push_back({{0, 0, 1.0}});
  return SdpProblem(1, SymmetricSparse{1, {{0, 0, c}}}, a, {b});
}

}  // namespace

TEST(Tridiagonal, SturmCountMatchesDense) {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + rng() % 30;
    const auto a = oracle::to_std(oracle::random_vector(k, rng));
    const auto b = oracle::to_std(oracle::random_vector(k - 1, rng));
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
    for (std::size_t i = 0; i < k; ++i) t(i, i) = a[i];
    for (std::size_t i = 0; i + 1 < k; ++i) t(i, i + 1) = t(i + 1, i) = b[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    const double x = oracle::random_vector(1, rng)(0);
    std::size_t below = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) below += es.eigenvalues()(i) < x;
    EXPECT_EQ(detail::sturm_count(a, b, x), below);
    EXPECT_NEAR(detail::tridiag_min_eig(a, b), es.eigenvalues()(0), 1e-12 * (1.0 + t.norm()));
    const auto v = detail::tridiag_eigvec(a, b, es.eigenvalues()(0));
    const Eigen::VectorXd ve = oracle::to_eigen(v);
    EXPECT_LE((t * ve - es.eigenvalues()(0) * ve).norm(), 1e-8 * (1.0 + t.norm()));
  }
}

TEST(MinEig, Identity) {
  const auto r = min_eig(dense_apply(Eigen::MatrixXd::Identity(10, 10)), 10);
  EXPECT_NEAR(r.theta, 1.0, 1e-10);
  EXPECT_TRUE(r.verified);
}

TEST(MinEig, Diagonal) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  d.diagonal() << -2.0, 0.0, 5.0;
  const auto r = min_eig(dense_apply(d), 3);
  EXPECT_NEAR(r.theta, -2.0, 1e-10);
  EXPECT_TRUE(r.verified);
}

TEST(MinEig, RandomSparseMatchesDense) {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = random_sparse_symmetric(200, 0.03, rng);
    const auto r = min_eig(dense_apply(s), 200, 1e-10, 1 + trial);
    EXPECT_NEAR(r.theta, oracle::min_eigenvalue(s), 1e-8);
  }
}

TEST(MinEig, RitzValueIsBoundedBelow) {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng() % 295;
    const auto s = random_sparse_symmetric(n, 0.05, rng);
    const auto r = min_eig(dense_apply(s), n, 1e-6, trial);
    const double truth = oracle::min_eigenvalue(s);
    EXPECT_GE(r.theta, truth - r.residual - 1e-12);
  }
}

TEST(MinEig, ShiftInvariance) {
  std::mt19937_64 rng(84);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20 + rng() % 100;
    const auto s = random_sparse_symmetric(n, 0.1, rng);
    const double c = 10.0 * oracle::random_vector(1, rng)(0);
    const Eigen::MatrixXd shifted = s + c * Eigen::MatrixXd::Identity(n, n);
    const auto a = min_eig(dense_apply(s), n, 1e-10, 3);
    const auto b = min_eig(dense_apply(shifted), n, 1e-10, 3);
    EXPECT_NEAR(b.theta, a.theta + c, 1e-8);
  }
}

TEST(MinEig, DeterministicForFixedSeed) {
  std::mt19937_64 rng(85);
  const auto s = random_sparse_symmetric(150, 0.05, rng);
  const auto a = min_eig(dense_apply(s), 150, 1e-6, 42);
  const auto b = min_eig(dense_apply(s), 150, 1e-6, 42);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.residual, b.residual);
  EXPECT_EQ(a.steps, b.steps);
}

TEST(MinEig, UnreachableToleranceIsFlagged) {
  std::mt19937_64 rng(86);
  const auto s = random_sparse_symmetric(40, 0.2, rng);
  const auto r = min_eig(dense_apply(s), 40, 1e-300, 1);
  EXPECT_TRUE(r.restarted);
  EXPECT_FALSE(r.verified);
  EXPECT_NEAR(r.theta, oracle::min_eigenvalue(s), 1e-8);
}

TEST(MinEig, RejectsBadArguments) {
  EXPECT_THROW(min_eig(dense_apply(Eigen::MatrixXd::Identity(1, 1)), 0), ContractViolation);
  EXPECT_THROW(min_eig(dense_apply(Eigen::MatrixXd::Identity(1, 1)), 1, 0.0), ContractViolation);
}

TEST(Err2, ZeroWhenDualSlackIsPsd) {
  const SdpOperators ops(scalar_problem(1.0, 1.0));
  const std::vector<double> y{0.5};
  const auto r = err2(ops, y);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_NEAR(r.sigma_min, 0.5, 1e-12);
}

TEST(Err2, ScalarExample) {
  const SdpOperators ops(scalar_problem(1.0, 1.0));
  const std::vector<double> y{2.0};
  const auto r = err2(ops, y);
  EXPECT_NEAR(r.sigma_min, -1.0, 1e-12);
  EXPECT_NEAR(r.value, 0.5, 1e-12);
}

TEST(Err2, TriangleDualOptimum) {
  const auto p = build_maxcut({3, {{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}}});
  const SdpOperators ops(p);
  const std::vector<double> y(3, -0.75);
  const auto r = err2(ops, y);
  EXPECT_LE(r.value, 1e-6);
  EXPECT_NEAR(r.sigma_min, 0.0, 1e-10);
}

TEST(Err2, MatchesDenseOnRandomProblems) {
  std::mt19937_64 rng(87);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng() % 40, m = 1 + rng() % 10;
    const auto p = oracle::random_problem(n, m, rng, 0.2, 0.3);
    const auto y = oracle::random_vector(m, rng);
    for (auto storage : {CStorage::kSparse, CStorage::kDense}) {
      const SdpOperators ops(p, storage);
      const auto r = err2(ops, oracle::to_std(y), 1e-10, 5);
      const double sigma = oracle::min_eigenvalue(oracle::C(p) - oracle::apply_At(p, y));
      EXPECT_NEAR(r.sigma_min, sigma, 1e-8 * (1.0 + std::abs(sigma)));
      EXPECT_NEAR(r.value, std::abs(std::min(0.0, sigma)) / (1.0 + p.c_norm1()), 1e-8);
    }
  }
}

TEST(Err2, UsesScaledObjective) {
  const SdpOperators ops(scalar_problem(1.0, 1.0));
  const std::vector<double> y{0.2};
  // At scale 0.1 the slack is 0.1 - 0.2 < 0; the normalization uses the scaled C.
  const auto r = err2(ops.scaled(0.1), y);
  EXPECT_NEAR(r.sigma_min, -0.1, 1e-12);
  EXPECT_NEAR(r.value, 0.1 / 1.1, 1e-12);
}
