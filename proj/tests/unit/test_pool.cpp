#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "lan/pool.hpp"
#include "oracles.hpp"

using namespace lan;

namespace {

// Brute-force cosine ranking, written independently of the library.
std::vector<std::size_t> brute_topk(const Matrix& rows, const Vector& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double denom = rows.row(i).norm() * q.norm();
    const double cos = denom > 0.0 ? rows.row(i).dot(q) / denom : 0.0;
    scored.emplace_back(-cos, static_cast<std::size_t>(i));
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

double recall(const HnswIndex& index, const Matrix& rows, std::mt19937_64& rng,
              std::size_t queries, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < queries; ++q) {
    const Vector query = random_normal(rows.cols(), 1, 1.0, rng);
    const auto approx = index.search(query, k);
    const auto exact = brute_topk(rows, query, k);
    const std::set<std::size_t> truth(exact.begin(), exact.end());
    for (auto id : approx) hits += truth.count(id);
  }
  return static_cast<double>(hits) / static_cast<double>(queries * k);
}

Instance instance(std::vector<Code> codes, Code target, std::uint8_t label = 0) {
  Instance in;
  in.codes = std::move(codes);
  in.query_pos = in.codes.size() - 1;
  in.target = target;
  in.label = label;
  return in;
}

}  // namespace

TEST(Hnsw, SingletonAlwaysReturned) {
  HnswIndex index;
  std::mt19937_64 rng(1);
  index.build(random_normal(1, 8, 1.0, rng), {});
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(index.search(random_normal(8, 1, 1.0, rng), 3), std::vector<std::size_t>{0});
}

TEST(Hnsw, SelfIsNearest) {
  std::mt19937_64 rng(2);
  const Matrix rows = random_normal(500, 16, 1.0, rng);
  HnswIndex index;
  index.build(rows, {});
  for (Eigen::Index i = 0; i < 500; i += 7)
    EXPECT_EQ(index.search(rows.row(i).transpose(), 1).front(), static_cast<std::size_t>(i));
}

TEST(Hnsw, FullKIsExhaustive) {
  std::mt19937_64 rng(3);
  const Matrix rows = random_normal(40, 6, 1.0, rng);
  HnswIndex index;
  index.build(rows, {});
  const Vector q = random_normal(6, 1, 1.0, rng);
  auto ids = index.search(q, 40);
  EXPECT_EQ(ids, brute_topk(rows, q, 40));
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(ids[i], i);
  EXPECT_EQ(index.search(q, 100).size(), 40u);
}

TEST(Hnsw, RecallAgainstBruteForce) {
  std::mt19937_64 rng(4);
  const Matrix rows = random_normal(3000, 32, 1.0, rng);
  HnswIndex index;
  index.build(rows, {});
  EXPECT_GE(recall(index, rows, rng, 200, 15), 0.95);
}

TEST(Hnsw, ExactTopkMatchesBruteForce) {
  std::mt19937_64 rng(5);
  const Matrix rows = random_normal(300, 8, 1.0, rng);
  for (int i = 0; i < 20; ++i) {
    const Vector q = random_normal(8, 1, 1.0, rng);
    EXPECT_EQ(exact_topk(rows, q, 15), brute_topk(rows, q, 15));
  }
}

TEST(Hnsw, BuildIsDeterministic) {
  std::mt19937_64 rng(6);
  const Matrix rows = random_normal(800, 16, 1.0, rng);
  HnswIndex a, b;
  a.build(rows, {});
  b.build(rows, {});
  for (int i = 0; i < 50; ++i) {
    const Vector q = random_normal(16, 1, 1.0, rng);
    EXPECT_EQ(a.search(q, 15), b.search(q, 15));
  }
}

TEST(Hnsw, EmptyIndexRejectsQueries) {
  HnswIndex index;
  index.build(Matrix(0, 4), {});
  EXPECT_THROW(index.search(Vector::Ones(4), 1), EmptyPool);
}

TEST(VectorPool, DuplicateKeysShareOneRow) {
  ParamStore params;
  std::mt19937_64 rng(7);
  const std::vector<Instance> inst = {instance({1, 2}, 3), instance({1, 2}, 3), instance({1, 2}, 4)};
  const auto pool = VectorPool::build(inst, 4, PoolMode::trainable, params, rng);
  EXPECT_EQ(pool.size(), 2u);
  EXPECT_EQ(params[pool.param_id()].rows(), 2);
}

TEST(VectorPool, AbnormalInstancesAreNotPooled) {
  ParamStore params;
  std::mt19937_64 rng(8);
  const std::vector<Instance> inst = {instance({1}, 2), instance({5}, 6, 1)};
  EXPECT_EQ(VectorPool::build(inst, 4, PoolMode::trainable, params, rng).size(), 1u);
}

TEST(VectorPool, NoNormalInstancesIsAnError) {
  ParamStore params;
  std::mt19937_64 rng(9);
  const std::vector<Instance> inst = {instance({5}, 6, 1)};
  EXPECT_THROW(VectorPool::build(inst, 4, PoolMode::trainable, params, rng), EmptyPool);
}

TEST(VectorPool, KeysAreStableAndOrdered) {
  std::mt19937_64 data(10);
  std::vector<Instance> inst;
  for (int i = 0; i < 200; ++i)
    inst.push_back(instance({static_cast<Code>(data() % 5), static_cast<Code>(data() % 5)},
                            static_cast<Code>(data() % 5)));
  ParamStore p1, p2;
  std::mt19937_64 r1(1), r2(2);
  const auto a = VectorPool::build(inst, 4, PoolMode::trainable, p1, r1);
  const auto b = VectorPool::build(inst, 4, PoolMode::trainable, p2, r2);
  EXPECT_EQ(a.keys(), b.keys());
  const std::set<std::uint64_t> unique(a.keys().begin(), a.keys().end());
  EXPECT_EQ(unique.size(), a.keys().size());
  // First-seen order.
  std::vector<std::uint64_t> expected;
  std::set<std::uint64_t> seen;
  for (const auto& in : inst)
    if (seen.insert(dedup_key(in)).second) expected.push_back(dedup_key(in));
  EXPECT_EQ(a.keys(), expected);
}

TEST(VectorPool, DedupKeyDependsOnContextAndTarget) {
  EXPECT_EQ(dedup_key(instance({1, 2}, 3)), dedup_key(instance({1, 2}, 3)));
  EXPECT_NE(dedup_key(instance({1, 2}, 3)), dedup_key(instance({1, 2}, 4)));
  EXPECT_NE(dedup_key(instance({1, 2}, 3)), dedup_key(instance({2, 1}, 3)));
  EXPECT_NE(dedup_key(instance({1, 2}, 3)), dedup_key(instance({2}, 3)));
}

TEST(VectorPool, QueryReturnsDistinctRowsWithValues) {
  std::mt19937_64 rng(11);
  std::vector<Instance> inst;
  for (Code c = 0; c < 60; ++c) inst.push_back(instance({c}, c));
  ParamStore params;
  auto pool = VectorPool::build(inst, 8, PoolMode::trainable, params, rng);
  pool.refresh_index(params);
  const auto n = pool.query(params, random_normal(8, 1, 1.0, rng), 15);
  ASSERT_EQ(n.ids.size(), 15u);
  EXPECT_EQ(std::set<std::size_t>(n.ids.begin(), n.ids.end()).size(), 15u);
  for (std::size_t i = 0; i < 15; ++i)
    EXPECT_EQ(n.vectors.row(static_cast<Eigen::Index>(i)),
              params[pool.param_id()].row(static_cast<Eigen::Index>(n.ids[i])));
  EXPECT_THROW(pool.query(params, Vector::Ones(8), 0), InvalidConfig);
}

TEST(VectorPool, RefreshCountsAndTracksDrift) {
  std::mt19937_64 rng(12);
  std::vector<Instance> inst;
  for (Code c = 0; c < 2000; ++c) inst.push_back(instance({c, static_cast<Code>(c / 7)}, c % 11));
  ParamStore params;
  auto pool = VectorPool::build(inst, 16, PoolMode::trainable, params, rng);
  for (int epoch = 0; epoch < 3; ++epoch) pool.refresh_index(params);
  EXPECT_EQ(pool.rebuilds(), 3u);

  // Unchanged vectors: a rebuild answers identically.
  std::vector<std::vector<std::size_t>> before;
  std::mt19937_64 qrng(99);
  std::vector<Vector> queries;
  for (int i = 0; i < 30; ++i) queries.push_back(random_normal(16, 1, 1.0, qrng));
  for (const auto& q : queries) before.push_back(pool.query(params, q, 15).ids);
  pool.refresh_index(params);
  for (std::size_t i = 0; i < queries.size(); ++i)
    EXPECT_EQ(pool.query(params, queries[i], 15).ids, before[i]);

  // Drifted vectors: recall is restored after the rebuild.
  params[pool.param_id()] += random_normal(2000, 16, 0.5, rng);
  pool.refresh_index(params);
  EXPECT_GE(recall(pool.index(), params[pool.param_id()], rng, 200, 15), 0.95);
}

TEST(VectorPool, RestoreRebuildsIndex) {
  std::mt19937_64 rng(13);
  const Matrix vectors = random_normal(50, 4, 1.0, rng);
  std::vector<std::uint64_t> keys(50);
  for (std::size_t i = 0; i < 50; ++i) keys[i] = i * 31 + 7;
  ParamStore params;
  const auto pool = VectorPool::restore(keys, vectors, PoolMode::trainable, params);
  EXPECT_EQ(pool.keys(), keys);
  EXPECT_EQ(pool.vectors(params), vectors);
  EXPECT_EQ(pool.index().size(), 50u);
  EXPECT_THROW(VectorPool::restore({}, Matrix(0, 4), PoolMode::trainable, params), EmptyPool);
}

TEST(VectorPool, CacheModeHoldsVectorsOutsideParameters) {
  std::mt19937_64 rng(14);
  ParamStore params;
  auto pool = VectorPool::build(std::vector<Instance>{instance({1}, 2), instance({2}, 3)}, 4,
                                PoolMode::encoder_cache, params, rng);
  EXPECT_EQ(params.size(), 0u);
  const Matrix cache = random_normal(2, 4, 1.0, rng);
  pool.set_cache(cache);
  pool.refresh_index(params);
  EXPECT_EQ(pool.query(params, cache.row(1).transpose(), 1).ids.front(), 1u);
}
