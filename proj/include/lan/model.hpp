#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lan/encoder.hpp"
#include "lan/graph.hpp"
#include "lan/ingest.hpp"
#include "lan/params.hpp"
#include "lan/pool.hpp"
#include "lan/scorer.hpp"

namespace lan {

// Component removals. Letters: P pooling -> mean, W r -> 1, S weighted ->
// plain cosine, R no graph regularization, H plain cross-entropy, G no pool,
// graph or GNN.
struct Ablation {
  bool pooling = false;
  bool weight = false;
  bool similarity = false;
  bool regularization = false;
  bool hybrid = false;
  bool graph = false;

  static Ablation parse(std::string_view letters);
  std::string letters() const;
  bool operator==(const Ablation&) const = default;
};

enum class DetectMode { real_time, post_hoc };

std::string_view to_string(DetectMode mode);
DetectMode parse_detect_mode(std::string_view name);  // "rt" / "ph" or full names

struct ModelConfig {
  std::size_t vocab_size = 0;  // M; post-hoc vocabularies include the mask code
  DetectMode mode = DetectMode::real_time;
  std::size_t hidden_size = 128;
  EncoderKind encoder = EncoderKind::lstm;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t pooling_heads = 8;
  AttentionNorm attention_norm = AttentionNorm::softmax;
  std::size_t similarity_heads = 4;
  double epsilon = 0.5;
  std::size_t k = 15;
  graph::RegWeights reg;
  bool normalize_laplacian = true;
  GnnKind gnn = GnnKind::gcn;
  std::size_t gnn_layers = 1;
  PoolMode pool_mode = PoolMode::trainable;
  AnnOptions ann;
  Ablation ablation;

  Direction direction() const {
    return mode == DetectMode::post_hoc ? Direction::bidirectional : Direction::forward;
  }
  Code mask_code() const { return static_cast<Code>(vocab_size) - 1; }
  void validate() const;
};

// Per-instance intermediate state, kept for backward and for diagnostics.
struct ForwardState {
  SequenceEncoder::Cache encoder;
  Matrix hidden;
  AttentivePooling::Cache pooling;
  Vector pooled;
  NeighborSet neighbors;
  Matrix nodes;  // X = [pooled; neighbors]
  graph::SimilarityCache similarity;
  Matrix sim, adj;
  double reg = 0.0;
  GraphEnhancer::Cache gnn;
  Vector enhanced;
  Vector logits, probs;
};

class LanModel {
 public:
  LanModel() = default;
  LanModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Builds the pool from normal training instances and indexes it. No-op
  // when the graph is ablated.
  void build_pool(std::span<const Instance> train, std::uint64_t seed);
  void restore_pool(std::vector<std::uint64_t> keys, Matrix vectors);
  bool has_pool() const { return pool_.has_value(); }
  const VectorPool& pool() const { return *pool_; }
  // Re-encodes cached pool rows (encoder_cache mode) and rebuilds the index.
  void refresh_pool();

  ForwardState forward(const Instance& instance) const;
  Vector predict(const Instance& instance) const { return forward(instance).probs; }
  double score(const Instance& instance) const;

  struct InstanceLoss {
    double cross_entropy = 0.0;  // -sum_j soft_target_j log max(p_j, 1e-12)
    double reg = 0.0;
  };
  // Accumulates into `grads` the gradient of
  //   loss_weight * cross_entropy + reg_weight * reg.
  InstanceLoss accumulate_gradient(const Instance& instance, const Vector& soft_target,
                             double loss_weight, double reg_weight, ParamStore& grads) const;

  // Encoder + pooling only: the vector used as the retrieval query.
  Vector pooled_representation(const Instance& instance) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  SequenceEncoder encoder_;
  AttentivePooling pooling_;
  std::optional<ParamId> similarity_;
  GraphEnhancer enhancer_;
  PredictionHead head_;
  std::optional<VectorPool> pool_;
};

}  // namespace lan
