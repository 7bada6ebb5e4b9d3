#include <gtest/gtest.h>

#include <random>

#include "lan/encoder.hpp"
#include "oracles.hpp"

using namespace lan;

namespace {

constexpr EncoderKind kAllKinds[] = {EncoderKind::simple, EncoderKind::gru, EncoderKind::lstm,
                                     EncoderKind::self_attention};

struct Fixture {
  ParamStore params;
  SequenceEncoder encoder;
  Fixture(EncoderKind kind, Direction dir = Direction::forward, std::size_t vocab = 30,
          std::size_t d = 8, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    EncoderConfig cfg;
    cfg.vocab_size = vocab;
    cfg.hidden_size = d;
    cfg.kind = kind;
    cfg.direction = dir;
    cfg.max_positions = 128;
    encoder = SequenceEncoder(cfg, params, rng);
  }
};

std::vector<Code> random_codes(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::uniform_int_distribution<int> pick(0, vocab - 1);
  std::vector<Code> out(n);
  for (auto& c : out) c = pick(rng);
  return out;
}

}  // namespace

TEST(Embed, LookupIsDeterministicAndExact) {
  Fixture f(EncoderKind::lstm);
  const Matrix e = f.encoder.embed(f.params, std::vector<Code>{0, 0});
  EXPECT_EQ(e.row(0), e.row(1));
  EXPECT_EQ(e.row(0), f.params[f.encoder.embedding_id()].row(0));
}

TEST(Embed, PermutingCodesPermutesRows) {
  Fixture f(EncoderKind::lstm);
  const Matrix a = f.encoder.embed(f.params, std::vector<Code>{3, 7, 11});
  const Matrix b = f.encoder.embed(f.params, std::vector<Code>{11, 3, 7});
  EXPECT_EQ(a.row(0), b.row(1));
  EXPECT_EQ(a.row(1), b.row(2));
  EXPECT_EQ(a.row(2), b.row(0));
}

TEST(Embed, OutOfRangeCodeThrows) {
  Fixture f(EncoderKind::lstm);
  EXPECT_THROW(f.encoder.embed(f.params, std::vector<Code>{30}), CodeOutOfRange);
  EXPECT_THROW(f.encoder.embed(f.params, std::vector<Code>{-1}), CodeOutOfRange);
}

TEST(Encode, OutputShapeMatchesInput) {
  std::mt19937_64 rng(4);
  for (auto kind : kAllKinds)
    for (auto dir : {Direction::forward, Direction::bidirectional})
      for (std::size_t n : {1u, 5u, 100u}) {
        Fixture f(kind, dir);
        SequenceEncoder::Cache cache;
        const Matrix h = f.encoder.forward(f.params, random_codes(rng, n, 30), cache);
        EXPECT_EQ(h.rows(), static_cast<Eigen::Index>(n));
        EXPECT_EQ(h.cols(), 8);
        EXPECT_TRUE(h.allFinite());
      }
}

TEST(Encode, ForwardModeIsCausal) {
  std::mt19937_64 rng(8);
  for (auto kind : kAllKinds) {
    Fixture f(kind);
    const auto codes = random_codes(rng, 12, 30);
    const Matrix emb = f.encoder.embed(f.params, codes);
    const Matrix base = f.encoder.encode(f.params, emb);
    for (Eigen::Index t = 0; t < 11; ++t) {
      Matrix perturbed = emb;
      perturbed.bottomRows(11 - t) += Matrix::Constant(11 - t, 8, 0.37);
      const Matrix h = f.encoder.encode(f.params, perturbed);
      for (Eigen::Index i = 0; i <= t; ++i) EXPECT_EQ(h.row(i), base.row(i)) << to_string(kind);
    }
    // Appending an activity leaves earlier states unchanged.
    auto longer = codes;
    longer.push_back(5);
    SequenceEncoder::Cache c1, c2;
    const Matrix h1 = f.encoder.forward(f.params, codes, c1);
    const Matrix h2 = f.encoder.forward(f.params, longer, c2);
    EXPECT_EQ(h2.topRows(12), h1) << to_string(kind);
  }
}

TEST(Encode, BidirectionalSeesTheFuture) {
  std::mt19937_64 rng(8);
  Fixture f(EncoderKind::lstm, Direction::bidirectional);
  const Matrix emb = f.encoder.embed(f.params, random_codes(rng, 6, 30));
  Matrix perturbed = emb;
  perturbed.row(5).array() += 1.0;
  EXPECT_NE(f.encoder.encode(f.params, emb).row(0), f.encoder.encode(f.params, perturbed).row(0));
}

TEST(Encode, ZeroRecurrentWeightsGiveZeroStates) {
  std::mt19937_64 rng(2);
  for (auto kind : {EncoderKind::simple, EncoderKind::gru, EncoderKind::lstm}) {
    Fixture f(kind);
    for (ParamId id = 0; id < f.params.size(); ++id)
      if (id != f.encoder.embedding_id()) f.params[id].setZero();
    SequenceEncoder::Cache cache;
    const Matrix h = f.encoder.forward(f.params, random_codes(rng, 9, 30), cache);
    EXPECT_EQ(h.cwiseAbs().maxCoeff(), 0.0) << to_string(kind);
  }
}

TEST(Encode, Deterministic) {
  std::mt19937_64 rng(6);
  const auto codes = random_codes(rng, 20, 30);
  Fixture a(EncoderKind::lstm), b(EncoderKind::lstm);
  SequenceEncoder::Cache ca, cb;
  EXPECT_EQ(a.encoder.forward(a.params, codes, ca), b.encoder.forward(b.params, codes, cb));
}

namespace {
struct PoolFixture {
  ParamStore params;
  AttentivePooling pooling;
  PoolFixture(std::size_t d, std::size_t heads, AttentionNorm norm = AttentionNorm::softmax) {
    std::mt19937_64 rng(3);
    pooling = AttentivePooling(d, heads, norm, params, rng);
  }
};
}  // namespace

TEST(AttentivePooling, SingleStepUsesItsValue) {
  PoolFixture f(8, 2);
  std::mt19937_64 rng(1);
  const Matrix h = random_normal(1, 8, 1.0, rng);
  AttentivePooling::Cache cache;
  const Vector out = f.pooling.forward(f.params, h, 0, cache);
  const Vector expected = (h * f.params[f.pooling.wv()] * f.params[f.pooling.wo()]).transpose();
  EXPECT_LT((out - expected).norm(), 1e-12);
}

TEST(AttentivePooling, IdenticalValuesIgnoreScores) {
  PoolFixture f(8, 4);
  std::mt19937_64 rng(1);
  const RowVector v = random_normal(1, 8, 1.0, rng);
  const Matrix h = v.replicate(6, 1);
  AttentivePooling::Cache cache;
  const Vector out = f.pooling.forward(f.params, h, 5, cache);
  const Vector expected = (v * f.params[f.pooling.wv()] * f.params[f.pooling.wo()]).transpose();
  EXPECT_LT((out - expected).norm(), 1e-12);
}

TEST(AttentivePooling, EqualScoresGiveColumnMean) {
  PoolFixture f(6, 1);
  f.params[f.pooling.wq()].setZero();
  f.params[f.pooling.wk()].setIdentity();
  f.params[f.pooling.wv()].setIdentity();
  f.params[f.pooling.wo()].setIdentity();
  std::mt19937_64 rng(1);
  const Matrix h = random_normal(7, 6, 1.0, rng);
  AttentivePooling::Cache cache;
  const Vector out = f.pooling.forward(f.params, h, 3, cache);
  EXPECT_LT((out - Vector(h.colwise().mean().transpose())).norm(), 1e-12);
  EXPECT_LT((out - mean_pool(h)).norm(), 1e-12);
}

TEST(AttentivePooling, WeightsSumToOnePerHead) {
  std::mt19937_64 rng(12);
  for (auto norm : {AttentionNorm::softmax, AttentionNorm::raw_sum}) {
    PoolFixture f(8, 4, norm);
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix h = random_normal(1 + trial % 9, 8, 1.0, rng);
      AttentivePooling::Cache cache;
      try {
        f.pooling.forward(f.params, h, static_cast<std::size_t>(h.rows() - 1), cache);
      } catch (const DegenerateNormalization&) {
        continue;
      }
      for (Eigen::Index c = 0; c < cache.weights.cols(); ++c)
        EXPECT_NEAR(cache.weights.col(c).sum(), 1.0, 1e-6);
    }
  }
}

TEST(AttentivePooling, RawSumRejectsNearZeroScoreSum) {
  PoolFixture f(4, 1, AttentionNorm::raw_sum);
  f.params[f.pooling.wq()].setZero();
  const Matrix h = Matrix::Ones(3, 4);
  AttentivePooling::Cache cache;
  EXPECT_THROW(f.pooling.forward(f.params, h, 2, cache), DegenerateNormalization);
}

TEST(AttentivePooling, HeadsMustDivideHidden) {
  EXPECT_THROW(PoolFixture(10, 4), InvalidConfig);
}

// d(g . pooled) / d(theta) for embeddings, encoder and pooling parameters.
class PooledGradient : public ::testing::TestWithParam<std::tuple<EncoderKind, Direction, AttentionNorm>> {};

TEST_P(PooledGradient, MatchesFiniteDifferences) {
  const auto [kind, dir, norm] = GetParam();
  ParamStore params;
  std::mt19937_64 rng(21);
  EncoderConfig cfg;
  cfg.vocab_size = 12;
  cfg.hidden_size = 8;
  cfg.kind = kind;
  cfg.direction = dir;
  cfg.max_positions = 16;
  SequenceEncoder encoder(cfg, params, rng);
  AttentivePooling pooling(8, 2, norm, params, rng);
  const std::vector<Code> codes = {1, 4, 4, 9, 2};
  const std::size_t query = dir == Direction::forward ? 4 : 2;
  const Vector g = random_normal(8, 1, 1.0, rng);

  auto loss = [&] {
    SequenceEncoder::Cache ec;
    AttentivePooling::Cache pc;
    const Matrix h = encoder.forward(params, codes, ec);
    return g.dot(pooling.forward(params, h, query, pc));
  };
  ParamStore grads = params.zeros_like();
  {
    SequenceEncoder::Cache ec;
    AttentivePooling::Cache pc;
    const Matrix h = encoder.forward(params, codes, ec);
    pooling.forward(params, h, query, pc);
    const Matrix dh = pooling.backward(params, h, pc, g, grads);
    encoder.backward(params, ec, dh, grads);
  }
  const auto result = oracle::check_gradients(params, grads, loss, rng, 20);
  EXPECT_GT(result.checked, 0u);
  EXPECT_LT(result.max_rel, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    Encoders, PooledGradient,
    ::testing::Values(
        std::make_tuple(EncoderKind::lstm, Direction::forward, AttentionNorm::softmax),
        std::make_tuple(EncoderKind::gru, Direction::forward, AttentionNorm::softmax),
        std::make_tuple(EncoderKind::simple, Direction::forward, AttentionNorm::softmax),
        std::make_tuple(EncoderKind::self_attention, Direction::forward, AttentionNorm::softmax),
        std::make_tuple(EncoderKind::lstm, Direction::bidirectional, AttentionNorm::softmax),
        std::make_tuple(EncoderKind::gru, Direction::bidirectional, AttentionNorm::softmax),
        std::make_tuple(EncoderKind::self_attention, Direction::bidirectional,
                        AttentionNorm::softmax),
        std::make_tuple(EncoderKind::lstm, Direction::forward, AttentionNorm::raw_sum)));

TEST(MeanPool, BackwardSpreadsEvenly) {
  const Vector d = Vector::LinSpaced(4, 1.0, 4.0);
  const Matrix g = mean_pool_backward(5, d);
  ASSERT_EQ(g.rows(), 5);
  for (Eigen::Index r = 0; r < 5; ++r) EXPECT_LT((g.row(r).transpose() - d / 5.0).norm(), 1e-15);
}
