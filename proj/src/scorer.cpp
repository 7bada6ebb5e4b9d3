#include "lan/scorer.hpp"

#include <cmath>
#include <limits>

#include "lan/graph.hpp"

namespace lan {

std::string_view to_string(GnnKind kind) { return kind == GnnKind::gcn ? "gcn" : "gat"; }

GnnKind parse_gnn_kind(std::string_view name) {
  if (name == "gcn") return GnnKind::gcn;
  if (name == "gat") return GnnKind::gat;
  throw InvalidConfig("unknown gnn '" + std::string(name) + "'");
}

namespace gnn {

namespace {

Vector inv_sqrt_degrees(const Matrix& adj, Vector* deg_out = nullptr) {
  const Vector deg = adj.rowwise().sum();
  Vector s(deg.size());
  for (Eigen::Index i = 0; i < deg.size(); ++i)
    s(i) = 1.0 / std::sqrt(std::max(deg(i), graph::kDegreeClamp));
  if (deg_out) *deg_out = deg;
  return s;
}

}  // namespace

Matrix normalized_adjacency(const Matrix& adj) {
  const Vector s = inv_sqrt_degrees(adj);
  return s.asDiagonal() * adj * s.asDiagonal();
}

Matrix gcn_layer(const Matrix& adj, const Matrix& x, const Matrix& w, GcnCache* cache) {
  Matrix norm_adj = normalized_adjacency(adj);
  Matrix aggregated = norm_adj * x;
  Matrix pre = aggregated * w.transpose();
  Matrix out = pre.cwiseMax(0.0);
  if (cache) {
    cache->norm_adj = std::move(norm_adj);
    cache->aggregated = std::move(aggregated);
    cache->pre = std::move(pre);
  }
  return out;
}

void gcn_layer_backward(const Matrix& adj, const Matrix& x, const Matrix& w,
                        const GcnCache& cache, const Matrix& d_out, Matrix* d_adj, Matrix& d_x,
                        Matrix& d_w) {
  const Matrix d_pre = (cache.pre.array() > 0.0).select(d_out, 0.0);
  d_w.noalias() += d_pre.transpose() * cache.aggregated;
  const Matrix d_agg = d_pre * w;
  d_x.noalias() += cache.norm_adj.transpose() * d_agg;
  if (!d_adj) return;
  const Matrix d_norm = d_agg * x.transpose();
  Vector deg;
  const Vector s = inv_sqrt_degrees(adj, &deg);
  const Eigen::Index n = adj.rows();
  Vector d_deg = Vector::Zero(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    if (deg(a) < graph::kDegreeClamp) continue;
    const double ds = -0.5 * std::pow(deg(a), -1.5);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      acc += d_norm(a, j) * adj(a, j) * s(j) + d_norm(j, a) * adj(j, a) * s(j);
    d_deg(a) = ds * acc;
  }
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) (*d_adj)(a, b) += s(a) * s(b) * d_norm(a, b) + d_deg(a);
}

Matrix gat_layer(const Matrix& adj, const Matrix& x, const Matrix& w, const Vector& c,
                 GatCache* cache) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = w.rows();
  if (c.size() != 2 * d) throw ComputeError("GAT score vector must have length 2d");
  Matrix projected = x * w.transpose();
  const Vector src = projected * c.head(d);
  const Vector dst = projected * c.tail(d);
  Matrix logits = Matrix::Zero(n, n);
  Matrix attention = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(adj(i, j) > 0.0)) continue;
      const double e = src(i) + dst(j);
      logits(i, j) = e;
      const double act = e > 0.0 ? e : kLeakySlope * e;
      attention(i, j) = act;
      mx = std::max(mx, act);
      any = true;
    }
    if (!any) throw ComputeError("IsolatedNode: node " + std::to_string(i) + " has no neighbors");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(adj(i, j) > 0.0)) continue;
      attention(i, j) = std::exp(attention(i, j) - mx);
      sum += attention(i, j);
    }
    for (Eigen::Index j = 0; j < n; ++j)
      if (adj(i, j) > 0.0) attention(i, j) /= sum;
  }
  Matrix aggregated = attention * x;
  Matrix pre = aggregated * w.transpose();
  Matrix out = pre.cwiseMax(0.0);
  if (cache) {
    cache->projected = std::move(projected);
    cache->logits = std::move(logits);
    cache->attention = std::move(attention);
    cache->aggregated = std::move(aggregated);
    cache->pre = std::move(pre);
  }
  return out;
}

void gat_layer_backward(const Matrix& x, const Matrix& w, const Vector& c, const GatCache& cache,
                        const Matrix& d_out, Matrix& d_x, Matrix& d_w, Vector& d_c) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = w.rows();
  const Matrix d_pre = (cache.pre.array() > 0.0).select(d_out, 0.0);
  d_w.noalias() += d_pre.transpose() * cache.aggregated;
  const Matrix d_agg = d_pre * w;
  d_x.noalias() += cache.attention.transpose() * d_agg;
  const Matrix d_att = d_agg * x.transpose();
  Vector d_src = Vector::Zero(n);
  Vector d_dst = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dot = cache.attention.row(i).dot(d_att.row(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      const double g = cache.attention(i, j);
      if (g == 0.0) continue;
      const double de = g * (d_att(i, j) - dot);
      const double dl = cache.logits(i, j) > 0.0 ? de : kLeakySlope * de;
      d_src(i) += dl;
      d_dst(j) += dl;
    }
  }
  d_c.head(d) += cache.projected.transpose() * d_src;
  d_c.tail(d) += cache.projected.transpose() * d_dst;
  const Matrix d_proj = d_src * c.head(d).transpose() + d_dst * c.tail(d).transpose();
  d_w.noalias() += d_proj.transpose() * x;
  d_x.noalias() += d_proj * w;
}

}  // namespace gnn

GraphEnhancer::GraphEnhancer(std::size_t hidden, std::size_t layers, GnnKind kind,
                             ParamStore& params, std::mt19937_64& rng)
    : kind_(kind) {
  if (layers == 0) throw InvalidConfig("gnn_layers must be at least 1");
  const auto d = static_cast<Eigen::Index>(hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t p = 0; p < layers; ++p) {
    const std::string prefix = "gnn." + std::to_string(p);
    weights_.push_back(params.add(prefix + ".w", random_uniform(d, d, bound, rng)));
    if (kind == GnnKind::gat)
      scores_.push_back(params.add(prefix + ".c", random_uniform(2 * d, 1, bound, rng)));
  }
}

Vector GraphEnhancer::forward(const ParamStore& params, const Matrix& adj, const Matrix& x,
                              Cache& cache) const {
  const std::size_t layers = weights_.size();
  cache.inputs.assign(1, x);
  cache.gcn.assign(kind_ == GnnKind::gcn ? layers : 0, {});
  cache.gat.assign(kind_ == GnnKind::gat ? layers : 0, {});
  Matrix cur = x;
  for (std::size_t p = 0; p < layers; ++p) {
    if (kind_ == GnnKind::gcn)
      cur = gnn::gcn_layer(adj, cur, params[weights_[p]], &cache.gcn[p]);
    else
      cur = gnn::gat_layer(adj, cur, params[weights_[p]], params[scores_[p]].col(0), &cache.gat[p]);
    if (p + 1 < layers) cache.inputs.push_back(cur);
  }
  return cur.row(0).transpose();
}

void GraphEnhancer::backward(const ParamStore& params, const Matrix& adj, const Cache& cache,
                             const Vector& d_out, Matrix& d_adj, Matrix& d_x,
                             ParamStore& grads) const {
  const std::size_t layers = weights_.size();
  const Eigen::Index n = adj.rows();
  Matrix d_cur = Matrix::Zero(n, d_out.size());
  d_cur.row(0) = d_out.transpose();
  for (std::size_t p = layers; p-- > 0;) {
    const Matrix& input = cache.inputs[p];
    Matrix d_in = Matrix::Zero(input.rows(), input.cols());
    if (kind_ == GnnKind::gcn) {
      gnn::gcn_layer_backward(adj, input, params[weights_[p]], cache.gcn[p], d_cur, &d_adj, d_in,
                              grads[weights_[p]]);
    } else {
      Vector d_c = Vector::Zero(params[scores_[p]].rows());
      gnn::gat_layer_backward(input, params[weights_[p]], params[scores_[p]].col(0), cache.gat[p],
                              d_cur, d_in, grads[weights_[p]], d_c);
      grads[scores_[p]].col(0) += d_c;
    }
    d_cur = std::move(d_in);
  }
  d_x += d_cur;
}

PredictionHead::PredictionHead(std::size_t hidden, std::size_t vocab, ParamStore& params,
                               std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  weight_ = params.add("head.w", random_uniform(static_cast<Eigen::Index>(vocab),
                                                static_cast<Eigen::Index>(hidden), bound, rng));
  bias_ = params.add("head.b", random_uniform(static_cast<Eigen::Index>(vocab), 1, bound, rng));
}

Vector PredictionHead::forward(const ParamStore& params, const Vector& enhanced) const {
  return params[weight_] * enhanced + params[bias_].col(0);
}

Vector PredictionHead::backward(const ParamStore& params, const Vector& enhanced,
                                const Vector& d_logits, ParamStore& grads) const {
  grads[weight_].noalias() += d_logits * enhanced.transpose();
  grads[bias_].col(0) += d_logits;
  return params[weight_].transpose() * d_logits;
}

Vector softmax(const Vector& logits) {
  Vector out = (logits.array() - logits.maxCoeff()).exp();
  return out / out.sum();
}

}  // namespace lan
