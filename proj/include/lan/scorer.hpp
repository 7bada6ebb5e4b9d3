#pragma once

#include <random>
#include <string_view>
#include <vector>

#include "lan/common.hpp"
#include "lan/params.hpp"

namespace lan {

enum class GnnKind { gcn, gat };

std::string_view to_string(GnnKind kind);
GnnKind parse_gnn_kind(std::string_view name);

namespace gnn {

inline constexpr double kLeakySlope = 0.2;

// D^{-1/2} A D^{-1/2} with the degree clamp applied.
Matrix normalized_adjacency(const Matrix& adj);

struct GcnCache {
  Matrix norm_adj, aggregated, pre;
};

// X' = relu(D^{-1/2} A D^{-1/2} X W^T)
Matrix gcn_layer(const Matrix& adj, const Matrix& x, const Matrix& w, GcnCache* cache = nullptr);
// Accumulates into d_adj (may be null), d_x and d_w.
void gcn_layer_backward(const Matrix& adj, const Matrix& x, const Matrix& w,
                        const GcnCache& cache, const Matrix& d_out, Matrix* d_adj, Matrix& d_x,
                        Matrix& d_w);

struct GatCache {
  Matrix projected;   // X W^T
  Matrix logits;      // pre-activation scores, valid on the support of A
  Matrix attention;   // gamma, zero outside the support
  Matrix aggregated;  // gamma X
  Matrix pre;         // aggregated W^T
};

// gamma_ij = softmax over {j : A_ij > 0} of leaky(c^T [W x_i; W x_j]);
// X'_i = relu(W sum_j gamma_ij x_j). `c` has length 2d.
Matrix gat_layer(const Matrix& adj, const Matrix& x, const Matrix& w, const Vector& c,
                 GatCache* cache = nullptr);
void gat_layer_backward(const Matrix& x, const Matrix& w, const Vector& c, const GatCache& cache,
                        const Matrix& d_out, Matrix& d_x, Matrix& d_w, Vector& d_c);

}  // namespace gnn

// Stack of GNN layers over an activity graph; the enhanced vector is node 0.
class GraphEnhancer {
 public:
  GraphEnhancer() = default;
  GraphEnhancer(std::size_t hidden, std::size_t layers, GnnKind kind, ParamStore& params,
                std::mt19937_64& rng);

  struct Cache {
    std::vector<Matrix> inputs;  // X^(p)
    std::vector<gnn::GcnCache> gcn;
    std::vector<gnn::GatCache> gat;
  };

  Vector forward(const ParamStore& params, const Matrix& adj, const Matrix& x, Cache& cache) const;
  // Gradient flows into A only for GCN layers.
  void backward(const ParamStore& params, const Matrix& adj, const Cache& cache,
                const Vector& d_out, Matrix& d_adj, Matrix& d_x, ParamStore& grads) const;

  GnnKind kind() const { return kind_; }
  std::size_t layers() const { return weights_.size(); }
  ParamId weight(std::size_t layer) const { return weights_.at(layer); }

 private:
  GnnKind kind_ = GnnKind::gcn;
  std::vector<ParamId> weights_;
  std::vector<ParamId> scores_;
};

// Logits W_FC h + b_FC; softmax is applied by the caller.
class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(std::size_t hidden, std::size_t vocab, ParamStore& params, std::mt19937_64& rng);

  Vector forward(const ParamStore& params, const Vector& enhanced) const;
  // d_logits is dL/d(logits); returns dL/dh.
  Vector backward(const ParamStore& params, const Vector& enhanced, const Vector& d_logits,
                  ParamStore& grads) const;

  ParamId weight() const { return weight_; }
  ParamId bias() const { return bias_; }

 private:
  ParamId weight_ = 0, bias_ = 0;
};

Vector softmax(const Vector& logits);

}  // namespace lan
