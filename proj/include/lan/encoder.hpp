#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "lan/common.hpp"
#include "lan/params.hpp"

namespace lan {

enum class EncoderKind { simple, gru, lstm, self_attention };
enum class Direction { forward, bidirectional };
enum class AttentionNorm { softmax, raw_sum };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);
std::string_view to_string(AttentionNorm norm);
AttentionNorm parse_attention_norm(std::string_view name);

struct EncoderConfig {
  std::size_t vocab_size = 0;   // M, including the mask code in post-hoc mode
  std::size_t hidden_size = 128;
  EncoderKind kind = EncoderKind::lstm;
  Direction direction = Direction::forward;
  std::size_t max_positions = 256;  // position table for self-attention
};

// Embedding lookup followed by a sequence encoder. Output rows are the hidden
// states h_1..h_n, each of width hidden_size.
class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  SequenceEncoder(const EncoderConfig& config, ParamStore& params, std::mt19937_64& rng);

  struct StepCache {
    Vector x, h_prev, c_prev;  // inputs of the step
    Vector gates;              // post-activation gates
    Vector gh;                 // GRU: recurrent pre-activation U h + b_hh
    Vector c;                  // LSTM cell state
    Vector h;
  };
  struct DirectionCache {
    std::vector<StepCache> steps;
  };
  struct Cache {
    std::vector<Code> codes;
    Matrix embedded;  // n x d
    DirectionCache fwd, bwd;
    Matrix concat;    // bidirectional: n x 2d
    // self-attention
    Matrix xin, q, k, v, attn, mixed;
    Matrix hidden;    // n x d
  };

  Matrix embed(const ParamStore& params, std::span<const Code> codes) const;
  Matrix encode(const ParamStore& params, const Matrix& embedded, Cache* cache = nullptr) const;
  // embed + encode; fills the cache for backward
  Matrix forward(const ParamStore& params, std::span<const Code> codes, Cache& cache) const;
  // Accumulates parameter gradients given dL/dH.
  void backward(const ParamStore& params, const Cache& cache, const Matrix& d_hidden,
                ParamStore& grads) const;

  const EncoderConfig& config() const { return config_; }
  ParamId embedding_id() const { return embedding_; }

 private:
  struct RecurrentIds {
    ParamId w_ih = 0, w_hh = 0, b_ih = 0, b_hh = 0;
  };

  Matrix run_direction(const ParamStore& params, const RecurrentIds& ids, const Matrix& inputs,
                       DirectionCache* cache) const;
  Matrix backprop_direction(const ParamStore& params, const RecurrentIds& ids,
                            const DirectionCache& cache, const Matrix& d_out,
                            ParamStore& grads) const;
  Matrix attention_forward(const ParamStore& params, const Matrix& embedded, Cache* cache) const;
  Matrix attention_backward(const ParamStore& params, const Cache& cache, const Matrix& d_hidden,
                            ParamStore& grads) const;

  EncoderConfig config_;
  ParamId embedding_ = 0;
  RecurrentIds fwd_, bwd_;
  ParamId bi_proj_ = 0, bi_bias_ = 0;
  ParamId att_q_ = 0, att_k_ = 0, att_v_ = 0, att_o_ = 0, positions_ = 0;
};

// Multi-head attentive pooling: the query is the hidden state at a chosen
// position; keys and values are all hidden states.
class AttentivePooling {
 public:
  AttentivePooling() = default;
  AttentivePooling(std::size_t hidden, std::size_t heads, AttentionNorm norm, ParamStore& params,
                   std::mt19937_64& rng);

  struct Cache {
    std::size_t query_pos = 0;
    RowVector query;      // projected query, 1 x d
    Matrix keys, values;  // n x d
    Matrix weights;       // n x heads; columns sum to 1
    RowVector concat;     // 1 x d
  };

  Vector forward(const ParamStore& params, const Matrix& hidden, std::size_t query_pos,
                 Cache& cache) const;
  // Returns dL/dH for pooled-output gradient d_out.
  Matrix backward(const ParamStore& params, const Matrix& hidden, const Cache& cache,
                  const Vector& d_out, ParamStore& grads) const;

  std::size_t heads() const { return heads_; }
  AttentionNorm norm() const { return norm_; }
  ParamId wq() const { return wq_; }
  ParamId wk() const { return wk_; }
  ParamId wv() const { return wv_; }
  ParamId wo() const { return wo_; }

  // Threshold below which raw-sum normalization is rejected.
  static constexpr double kMinScoreSum = 1e-8;

 private:
  std::size_t hidden_ = 0, heads_ = 1;
  AttentionNorm norm_ = AttentionNorm::softmax;
  ParamId wq_ = 0, wk_ = 0, wv_ = 0, wo_ = 0;
};

// Column mean of the hidden states (pooling ablation).
Vector mean_pool(const Matrix& hidden);
Matrix mean_pool_backward(Eigen::Index rows, const Vector& d_out);

}  // namespace lan
