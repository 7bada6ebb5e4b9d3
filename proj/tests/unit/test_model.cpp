#include <gtest/gtest.h>

#include <random>
#include <set>

#include "lan/model.hpp"
#include "lan/training.hpp"
#include "micro_model.hpp"

using namespace lan;
using namespace lan::micro;

class MicroGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(MicroGradient, MatchesFiniteDifferences) {
  const std::string variant = GetParam();
  ModelConfig cfg = micro_config();
  if (variant == "ph") cfg = micro_config(DetectMode::post_hoc);
  else if (variant == "gat") cfg.gnn = GnnKind::gat;
  else if (variant == "two_layers") cfg.gnn_layers = 2;
  else if (variant == "plain_laplacian") cfg.normalize_laplacian = false;
  else if (variant == "cache_pool") cfg.pool_mode = PoolMode::encoder_cache;
  else if (variant == "gru") cfg.encoder = EncoderKind::gru;
  else if (variant == "self_attention") cfg.encoder = EncoderKind::self_attention;
  else if (variant != "default") cfg.ablation = Ablation::parse(variant);
  const auto r = micro_gradient(cfg, 4, 77);
  EXPECT_GT(r.checked, 20u);
  EXPECT_LT(r.max_rel, 1e-4) << variant << " " << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Variants, MicroGradient,
                         ::testing::Values("default", "ph", "gat", "two_layers", "plain_laplacian",
                                           "cache_pool", "gru", "self_attention", "P", "S", "R",
                                           "H", "G", "PWSRHG"));

TEST(LanModel, AblationsRemoveTheirParameters) {
  auto has = [](const LanModel& m, const std::string& prefix) {
    for (ParamId id = 0; id < m.params().size(); ++id)
      if (m.params().name(id).rfind(prefix, 0) == 0) return true;
    return false;
  };
  ModelConfig cfg = micro_config();
  const auto train = corpus(cfg.mode, 1);
  LanModel full(cfg, 1);
  full.build_pool(train, 1);
  EXPECT_TRUE(has(full, "pooling."));
  EXPECT_TRUE(has(full, "graph.similarity"));
  EXPECT_TRUE(has(full, "gnn."));
  EXPECT_TRUE(has(full, "pool.vectors"));

  cfg.ablation = Ablation::parse("PWSRHG");
  LanModel bare(cfg, 1);
  bare.build_pool(train, 1);
  EXPECT_FALSE(bare.has_pool());
  for (const char* prefix : {"pooling.", "graph.", "gnn.", "pool."}) EXPECT_FALSE(has(bare, prefix));

  cfg.ablation = Ablation::parse("S");
  EXPECT_FALSE(has(LanModel(cfg, 1), "graph.similarity"));
}

TEST(LanModel, AblationLettersRoundTrip) {
  EXPECT_EQ(Ablation::parse("-P/W/S/R/H/G").letters(), "PWSRHG");
  EXPECT_EQ(Ablation::parse("GP").letters(), "PG");
  EXPECT_THROW(Ablation::parse("X"), InvalidConfig);
}

TEST(LanModel, ScoringIsDeterministicAndValid) {
  const ModelConfig cfg = micro_config();
  const auto train = corpus(cfg.mode, 2);
  LanModel model(cfg, 2);
  model.build_pool(train, 2);
  for (const auto& inst : train) {
    const ForwardState s = model.forward(inst);
    EXPECT_NEAR(s.probs.sum(), 1.0, 1e-6);
    EXPECT_GT(s.probs.minCoeff(), 0.0);
    EXPECT_EQ(model.score(inst), model.score(inst));
    EXPECT_EQ(s.nodes.rows(), 4);
    for (Eigen::Index i = 0; i < s.adj.rows(); ++i)
      for (Eigen::Index j = 0; j < s.adj.cols(); ++j) EXPECT_EQ(s.adj(i, j), s.adj(j, i));
  }
}

TEST(LanModel, OnlyRetrievedPoolRowsReceiveGradient) {
  const ModelConfig cfg = micro_config();
  const auto train = corpus(cfg.mode, 3);
  LanModel model(cfg, 3);
  model.build_pool(train, 3);
  const Instance& inst = train.front();
  const ForwardState s = model.forward(inst);
  const std::set<std::size_t> retrieved(s.neighbors.ids.begin(), s.neighbors.ids.end());
  ParamStore grads = model.params().zeros_like();
  model.accumulate_gradient(inst, soft_label_row(inst.target, kVocab, false), 1.0, 1.0, grads);
  const ParamId pid = model.pool().param_id();
  const Matrix before = model.params()[pid];
  AdamWOptions opts;
  opts.weight_decay = 0.0;
  AdamW opt(model.params(), opts);
  opt.step(model.params(), grads);
  for (Eigen::Index r = 0; r < before.rows(); ++r) {
    const bool moved = model.params()[pid].row(r) != before.row(r);
    const bool has_grad = grads[pid].row(r).cwiseAbs().maxCoeff() > 0.0;
    if (retrieved.count(static_cast<std::size_t>(r))) EXPECT_EQ(moved, has_grad) << r;
    else {
      EXPECT_FALSE(has_grad) << r;
      EXPECT_FALSE(moved) << r;
    }
  }
  EXPECT_FALSE(retrieved.empty());
}

TEST(LanModel, NonRetrievedRowsDoNotAffectTheLoss) {
  const ModelConfig cfg = micro_config();
  const auto train = corpus(cfg.mode, 4);
  LanModel model(cfg, 4);
  model.build_pool(train, 4);
  const Instance& inst = train[3];
  const ForwardState s = model.forward(inst);
  const std::set<std::size_t> retrieved(s.neighbors.ids.begin(), s.neighbors.ids.end());
  const ParamId pid = model.pool().param_id();
  const double base = model.score(inst);
  for (Eigen::Index r = 0; r < model.params()[pid].rows(); ++r) {
    if (retrieved.count(static_cast<std::size_t>(r))) continue;
    model.params()[pid].row(r).array() += 5.0;
    EXPECT_EQ(model.score(inst), base);
  }
}

TEST(LanModel, PostHocUsesRightContext) {
  const ModelConfig cfg = micro_config(DetectMode::post_hoc);
  const auto train = corpus(cfg.mode, 5);
  LanModel model(cfg, 5);
  model.build_pool(train, 5);
  Instance inst;
  inst.codes = {3, static_cast<Code>(kVocab - 1), 8, 9, 10};
  inst.query_pos = 1;
  inst.target = 4;
  const double base = model.score(inst);
  Instance changed = inst;
  changed.codes[3] = 20;
  changed.codes[4] = 21;
  EXPECT_NE(model.score(changed), base);
}

TEST(LanModel, CachePoolTracksEncoder) {
  ModelConfig cfg = micro_config();
  cfg.pool_mode = PoolMode::encoder_cache;
  const auto train = corpus(cfg.mode, 6);
  LanModel model(cfg, 6);
  model.build_pool(train, 6);
  const auto& members = model.pool().members();
  for (std::size_t i = 0; i < members.size(); ++i)
    EXPECT_LT((model.pool().vectors(model.params()).row(static_cast<Eigen::Index>(i)).transpose() -
               model.pooled_representation(members[i]))
                  .norm(),
              1e-12);
}

TEST(LanModel, RejectsInvalidInputs) {
  ModelConfig cfg = micro_config();
  LanModel model(cfg, 7);
  Instance inst;
  inst.codes = {1, 2};
  inst.query_pos = 1;
  inst.target = 5;
  EXPECT_THROW(model.forward(inst), EmptyPool);
  inst.target = static_cast<Code>(kVocab);
  EXPECT_THROW(model.forward(inst), CodeOutOfRange);
  cfg.pooling_heads = 3;
  EXPECT_THROW(LanModel(cfg, 1), InvalidConfig);
  cfg = micro_config();
  cfg.epsilon = 1.5;
  EXPECT_THROW(LanModel(cfg, 1), InvalidConfig);
}
