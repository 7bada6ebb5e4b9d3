#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lan/graph.hpp"
#include "oracles.hpp"

using namespace lan;
using namespace lan::graph;

namespace {

// Symmetric non-negative matrix with unit diagonal and ~half the
// off-diagonal entries zero.
Matrix random_adjacency(std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (u(rng) < 0.5) a(i, j) = a(j, i) = u(rng);
  return a;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()),
           static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : values) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(PairwiseSimilarity, IdenticalRowsAreOne) {
  std::mt19937_64 rng(1);
  Matrix x = random_normal(3, 5, 1.0, rng);
  x.row(2) = x.row(0);
  const Matrix s = pairwise_similarity(x, random_normal(4, 5, 1.0, rng));
  EXPECT_NEAR(s(0, 2), 1.0, 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(s(i, i), 1.0, 1e-12);
}

TEST(PairwiseSimilarity, SingleOnesHeadIsPlainCosine) {
  std::mt19937_64 rng(2);
  const Matrix x = random_normal(5, 6, 1.0, rng);
  const Matrix s = pairwise_similarity(x, Matrix::Ones(1, 6));
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j)
      EXPECT_NEAR(s(i, j), x.row(i).dot(x.row(j)) / (x.row(i).norm() * x.row(j).norm()), 1e-12);
}

TEST(PairwiseSimilarity, TwoHeadExampleWithZeroRowConvention) {
  const Matrix x = rows({{1, 0}, {1, 1}});
  const Matrix w = rows({{1, 0}, {0, 1}});
  SimilarityCache cache;
  const Matrix s = pairwise_similarity(x, w, &cache);
  EXPECT_NEAR(s(0, 1), 0.5, 1e-12);
  EXPECT_NEAR(s(0, 1), oracle::weighted_cosine(x, w, 0, 1), 1e-12);
  EXPECT_GE(cache.zero_rows, 1u);
}

TEST(PairwiseSimilarity, MatchesScalarOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix x = random_normal(5, 7, 1.0, rng);
    const Matrix w = random_normal(3, 7, 1.0, rng);
    const Matrix s = pairwise_similarity(x, w);
    for (Eigen::Index i = 0; i < 5; ++i)
      for (Eigen::Index j = 0; j < 5; ++j)
        EXPECT_NEAR(s(i, j), oracle::weighted_cosine(x, w, i, j), 1e-12);
  }
}

TEST(ThresholdAdjacency, Examples) {
  Matrix s(2, 2);
  s << 1.0, 0.4, 0.4, 1.0;
  EXPECT_EQ(threshold_adjacency(s, 0.5)(0, 1), 0.0);
  s(0, 1) = s(1, 0) = 0.6;
  EXPECT_EQ(threshold_adjacency(s, 0.5)(0, 1), 0.6);
  s(0, 1) = s(1, 0) = -0.3;
  EXPECT_EQ(threshold_adjacency(s, 0.0)(0, 1), 0.0);
}

TEST(ThresholdAdjacency, SymmetricBoundedWithSelfLoops) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> eps(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix x = random_normal(16, 8, 1.0, rng);
    const Matrix w = random_normal(4, 8, 1.0, rng);
    const double e = eps(rng);
    const Matrix a = threshold_adjacency(pairwise_similarity(x, w), e);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      EXPECT_NEAR(a(i, i), 1.0, 1e-12);
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        EXPECT_EQ(a(i, j), a(j, i));
        if (a(i, j) != 0.0) {
          EXPECT_GE(a(i, j), e - 1e-6);
          EXPECT_LE(a(i, j), 1.0 + 1e-6);
        }
      }
    }
  }
}

TEST(ThresholdAdjacency, RaisingEpsilonNeverAddsEdges) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = pairwise_similarity(random_normal(10, 6, 1.0, rng), random_normal(2, 6, 1.0, rng));
    Eigen::Index previous = s.size() + 1;
    for (double e = 0.0; e <= 1.0; e += 0.05) {
      const Eigen::Index nnz = (threshold_adjacency(s, e).array() != 0.0).count();
      EXPECT_LE(nnz, previous);
      previous = nnz;
    }
  }
}

TEST(DirichletEnergy, IdenticalRowsGiveZero) {
  std::mt19937_64 rng(6);
  const Matrix x = random_normal(1, 4, 1.0, rng).replicate(5, 1);
  const Matrix a = random_adjacency(rng, 5);
  EXPECT_NEAR(dirichlet_energy(a, x, false), 0.0, 1e-12);
  // The normalized form compares x_i / sqrt(deg_i), so it vanishes only on
  // regular graphs.
  EXPECT_NEAR(dirichlet_energy(Matrix::Constant(5, 5, 0.3), x, true), 0.0, 1e-12);
}

TEST(DirichletEnergy, TwoNodeExample) {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const Matrix x = rows({{1, 0}, {0, 1}});
  EXPECT_NEAR(dirichlet_energy(a, x, false), 2.0, 1e-12);
  EXPECT_NEAR(oracle::dirichlet_double_sum(a, x), 2.0, 1e-12);
}

TEST(DirichletEnergy, TraceMatchesDoubleSum) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_adjacency(rng, 6);
    const Matrix x = random_normal(6, 5, 1.0, rng);
    EXPECT_NEAR(dirichlet_energy(a, x, false), oracle::dirichlet_double_sum(a, x), 1e-6);
    EXPECT_NEAR(dirichlet_energy(a, x, true), oracle::normalized_dirichlet_double_sum(a, x), 1e-6);
  }
}

TEST(DirichletEnergy, IsolatedNodeContributesNothingWhenNormalized) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = 1.0;
  std::mt19937_64 rng(8);
  const Matrix x = random_normal(3, 2, 1.0, rng);
  EXPECT_TRUE(std::isfinite(dirichlet_energy(a, x, true)));
  EXPECT_NEAR(dirichlet_energy(a, x, true), oracle::normalized_dirichlet_double_sum(a, x), 1e-9);
}

TEST(LogBarrier, Examples) {
  EXPECT_NEAR(log_barrier(Matrix::Identity(4, 4)), 0.0, 1e-9);
  EXPECT_NEAR(log_barrier(Matrix::Constant(3, 3, std::exp(1.0) / 3.0)), -3.0, 1e-9);
  EXPECT_NEAR(log_barrier(Matrix::Zero(2, 2)), -2.0 * std::log(1e-12), 1e-9);
  EXPECT_NEAR(log_barrier(Matrix::Zero(2, 2)), 55.262, 1e-3);
}

TEST(LogBarrier, MatchesDirectEvaluation) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_adjacency(rng, 6);
    EXPECT_NEAR(log_barrier(a), oracle::log_barrier_direct(a), 1e-9);
  }
}

TEST(Frobenius, Examples) {
  EXPECT_EQ(frobenius_sq(Matrix::Zero(3, 3)), 0.0);
  EXPECT_NEAR(frobenius_sq(Matrix::Identity(2, 2)), 2.0, 1e-15);
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_normal(4, 4, 1.0, rng);
    EXPECT_NEAR(frobenius_sq(a), oracle::frobenius_direct(a), 1e-9);
  }
}

TEST(GraphRegLoss, ZeroWeightsGiveZero) {
  std::mt19937_64 rng(11);
  EXPECT_EQ(graph_reg_loss(random_adjacency(rng, 4), random_normal(4, 3, 1.0, rng), {0, 0, 0}, true),
            0.0);
}

TEST(GraphRegLoss, TwoNodeFixtureComposesSubOracles) {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const Matrix x = rows({{1, 0}, {0, 1}});
  const RegWeights w{0.2, 0.1, 0.1};
  const double expected = 0.2 / 4.0 * oracle::dirichlet_double_sum(a, x) +
                          0.1 / 2.0 * oracle::log_barrier_direct(a) +
                          0.1 / 4.0 * oracle::frobenius_direct(a);
  EXPECT_NEAR(graph_reg_loss(a, x, w, false), expected, 1e-12);
  EXPECT_NEAR(expected, 0.1 + 0.0 + 0.05, 1e-9);
}

TEST(GraphRegLoss, LinearInWeights) {
  std::mt19937_64 rng(12);
  const Matrix a = random_adjacency(rng, 5);
  const Matrix x = random_normal(5, 3, 1.0, rng);
  const RegWeights w{0.2, 0.1, 0.1};
  const double base = graph_reg_loss(a, x, w, true);
  for (double c : {0.5, 2.0, 7.0})
    EXPECT_NEAR(graph_reg_loss(a, x, {c * 0.2, c * 0.1, c * 0.1}, true), c * base, 1e-9);
}

// X, W -> S -> A -> reg(A, X); the threshold gate is held fixed by keeping
// every similarity at least 1e-3 away from epsilon and from zero.
TEST(GraphRegLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  const double eps = 0.3;
  int instances = 0;
  for (int attempt = 0; attempt < 500 && instances < 20; ++attempt) {
    ParamStore params;
    const ParamId xid = params.add("x", random_normal(4, 6, 1.0, rng));
    const ParamId wid = params.add("w", random_normal(3, 6, 1.0, rng));
    const Matrix s0 = pairwise_similarity(params[xid], params[wid]);
    bool near = false;
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 4; ++j)
        if (i != j && (std::abs(s0(i, j) - eps) < 1e-3 || std::abs(s0(i, j)) < 1e-3)) near = true;
    if (near) continue;
    for (bool normalize : {false, true}) {
      const RegWeights weights{0.2, 0.1, 0.1};
      auto loss = [&] {
        const Matrix a = threshold_adjacency(pairwise_similarity(params[xid], params[wid]), eps);
        return graph_reg_loss(a, params[xid], weights, normalize);
      };
      ParamStore grads = params.zeros_like();
      SimilarityCache cache;
      const Matrix s = pairwise_similarity(params[xid], params[wid], &cache);
      const Matrix a = threshold_adjacency(s, eps);
      Matrix d_adj = Matrix::Zero(4, 4);
      graph_reg_loss_backward(a, params[xid], weights, normalize, 1.0, d_adj, grads[xid]);
      pairwise_similarity_backward(params[xid], params[wid], cache, threshold_backward(a, d_adj),
                                   grads[xid], &grads[wid]);
      const auto result = oracle::check_gradients(params, grads, loss, rng, 24);
      EXPECT_LT(result.max_rel, 1e-4) << "normalize=" << normalize;
    }
    ++instances;
  }
  EXPECT_EQ(instances, 20);
}

TEST(EdgeList, OneLinePerNonzero) {
  Matrix a = Matrix::Identity(3, 3);
  a(0, 2) = a(2, 0) = 0.75;
  std::ostringstream out;
  write_edge_list(out, a);
  EXPECT_EQ(out.str(), "0 0 1\n0 2 0.75\n1 1 1\n2 0 0.75\n2 2 1\n");
}
