#include "lan/encoder.hpp"

#include <cmath>

namespace lan {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::size_t gate_count(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::simple: return 1;
    case EncoderKind::gru: return 3;
    case EncoderKind::lstm: return 4;
    case EncoderKind::self_attention: return 0;
  }
  return 0;
}

}  // namespace

std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::simple: return "simple";
    case EncoderKind::gru: return "gru";
    case EncoderKind::lstm: return "lstm";
    case EncoderKind::self_attention: return "self_attention";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "simple" || name == "rnn") return EncoderKind::simple;
  if (name == "gru") return EncoderKind::gru;
  if (name == "lstm") return EncoderKind::lstm;
  if (name == "self_attention" || name == "transformer") return EncoderKind::self_attention;
  throw InvalidConfig("unknown encoder '" + std::string(name) + "'");
}

std::string_view to_string(AttentionNorm norm) {
  return norm == AttentionNorm::softmax ? "softmax" : "raw_sum";
}

AttentionNorm parse_attention_norm(std::string_view name) {
  if (name == "softmax") return AttentionNorm::softmax;
  if (name == "raw_sum") return AttentionNorm::raw_sum;
  throw InvalidConfig("unknown attention_norm '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// SequenceEncoder

SequenceEncoder::SequenceEncoder(const EncoderConfig& config, ParamStore& params,
                                 std::mt19937_64& rng)
    : config_(config) {
  const auto d = static_cast<Eigen::Index>(config.hidden_size);
  const auto m = static_cast<Eigen::Index>(config.vocab_size);
  if (d <= 0 || m <= 0) throw InvalidConfig("encoder needs positive hidden and vocabulary sizes");
  embedding_ = params.add("encoder.embedding", random_normal(m, d, 1.0, rng));
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  const bool bi = config.direction == Direction::bidirectional;
  if (config.kind == EncoderKind::self_attention) {
    att_q_ = params.add("encoder.attn.q", random_uniform(d, d, bound, rng));
    att_k_ = params.add("encoder.attn.k", random_uniform(d, d, bound, rng));
    att_v_ = params.add("encoder.attn.v", random_uniform(d, d, bound, rng));
    att_o_ = params.add("encoder.attn.o", random_uniform(d, d, bound, rng));
    positions_ = params.add(
        "encoder.attn.positions",
        random_normal(static_cast<Eigen::Index>(config.max_positions), d, 0.1, rng));
    return;
  }
  const auto g = static_cast<Eigen::Index>(gate_count(config.kind)) * d;
  auto make = [&](const std::string& prefix) {
    RecurrentIds ids;
    ids.w_ih = params.add(prefix + ".w_ih", random_uniform(g, d, bound, rng));
    ids.w_hh = params.add(prefix + ".w_hh", random_uniform(g, d, bound, rng));
    ids.b_ih = params.add(prefix + ".b_ih", random_uniform(g, 1, bound, rng));
    ids.b_hh = params.add(prefix + ".b_hh", random_uniform(g, 1, bound, rng));
    return ids;
  };
  fwd_ = make("encoder.fwd");
  if (bi) {
    bwd_ = make("encoder.bwd");
    const double pb = 1.0 / std::sqrt(2.0 * static_cast<double>(d));
    bi_proj_ = params.add("encoder.bi_proj", random_uniform(d, 2 * d, pb, rng));
    bi_bias_ = params.add("encoder.bi_bias", random_uniform(d, 1, pb, rng));
  }
}

Matrix SequenceEncoder::embed(const ParamStore& params, std::span<const Code> codes) const {
  const Matrix& table = params[embedding_];
  Matrix out(static_cast<Eigen::Index>(codes.size()), table.cols());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0 || codes[i] >= table.rows())
      throw CodeOutOfRange("activity code " + std::to_string(codes[i]) +
                           " outside vocabulary of size " + std::to_string(table.rows()));
    out.row(static_cast<Eigen::Index>(i)) = table.row(codes[i]);
  }
  return out;
}

Matrix SequenceEncoder::run_direction(const ParamStore& params, const RecurrentIds& ids,
                                      const Matrix& inputs, DirectionCache* cache) const {
  const Matrix& w = params[ids.w_ih];
  const Matrix& u = params[ids.w_hh];
  const Vector b_ih = params[ids.b_ih].col(0);
  const Vector b_hh = params[ids.b_hh].col(0);
  const Eigen::Index d = static_cast<Eigen::Index>(config_.hidden_size);
  const Eigen::Index n = inputs.rows();
  Matrix out(n, d);
  Vector h = Vector::Zero(d);
  Vector c = Vector::Zero(d);
  if (cache) cache->steps.resize(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) {
    const Vector x = inputs.row(t).transpose();
    StepCache step;
    if (cache) {
      step.x = x;
      step.h_prev = h;
      step.c_prev = c;
    }
    switch (config_.kind) {
      case EncoderKind::simple: {
        Vector a = w * x + b_ih + u * h + b_hh;
        h = a.array().tanh();
        if (cache) step.gates = h;
        break;
      }
      case EncoderKind::lstm: {
        Vector a = w * x + b_ih + u * h + b_hh;
        Vector gates(4 * d);
        for (Eigen::Index i = 0; i < d; ++i) {
          gates(i) = sigmoid(a(i));
          gates(d + i) = sigmoid(a(d + i));
          gates(2 * d + i) = std::tanh(a(2 * d + i));
          gates(3 * d + i) = sigmoid(a(3 * d + i));
        }
        c = gates.segment(d, d).cwiseProduct(c) +
            gates.segment(0, d).cwiseProduct(gates.segment(2 * d, d));
        h = gates.segment(3 * d, d).cwiseProduct(Vector(c.array().tanh()));
        if (cache) {
          step.gates = std::move(gates);
          step.c = c;
        }
        break;
      }
      case EncoderKind::gru: {
        Vector gi = w * x + b_ih;
        Vector gh = u * h + b_hh;
        Vector gates(3 * d);
        for (Eigen::Index i = 0; i < d; ++i) {
          gates(i) = sigmoid(gi(i) + gh(i));
          gates(d + i) = sigmoid(gi(d + i) + gh(d + i));
        }
        for (Eigen::Index i = 0; i < d; ++i)
          gates(2 * d + i) = std::tanh(gi(2 * d + i) + gates(i) * gh(2 * d + i));
        Vector next(d);
        for (Eigen::Index i = 0; i < d; ++i)
          next(i) = (1.0 - gates(d + i)) * gates(2 * d + i) + gates(d + i) * h(i);
        h = std::move(next);
        if (cache) {
          step.gates = std::move(gates);
          step.gh = std::move(gh);
        }
        break;
      }
      case EncoderKind::self_attention: break;
    }
    out.row(t) = h.transpose();
    if (cache) {
      step.h = h;
      cache->steps[static_cast<std::size_t>(t)] = std::move(step);
    }
  }
  return out;
}

Matrix SequenceEncoder::backprop_direction(const ParamStore& params, const RecurrentIds& ids,
                                           const DirectionCache& cache, const Matrix& d_out,
                                           ParamStore& grads) const {
  const Matrix& w = params[ids.w_ih];
  const Matrix& u = params[ids.w_hh];
  Matrix& dw = grads[ids.w_ih];
  Matrix& du = grads[ids.w_hh];
  auto db_ih = grads[ids.b_ih].col(0);
  auto db_hh = grads[ids.b_hh].col(0);
  const Eigen::Index d = static_cast<Eigen::Index>(config_.hidden_size);
  const Eigen::Index n = d_out.rows();
  Matrix d_inputs(n, w.cols());
  Vector dh_next = Vector::Zero(d);
  Vector dc_next = Vector::Zero(d);
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const StepCache& s = cache.steps[static_cast<std::size_t>(t)];
    Vector dh = d_out.row(t).transpose() + dh_next;
    switch (config_.kind) {
      case EncoderKind::simple: {
        Vector da = dh.array() * (1.0 - s.h.array().square());
        dw.noalias() += da * s.x.transpose();
        du.noalias() += da * s.h_prev.transpose();
        db_ih += da;
        db_hh += da;
        d_inputs.row(t) = (w.transpose() * da).transpose();
        dh_next = u.transpose() * da;
        break;
      }
      case EncoderKind::lstm: {
        const auto gi = s.gates.segment(0, d).array();
        const auto gf = s.gates.segment(d, d).array();
        const auto gg = s.gates.segment(2 * d, d).array();
        const auto go = s.gates.segment(3 * d, d).array();
        const Eigen::ArrayXd tc = s.c.array().tanh();
        Eigen::ArrayXd dc = dc_next.array() + dh.array() * go * (1.0 - tc.square());
        Vector da(4 * d);
        da.segment(0, d) = (dc * gg * gi * (1.0 - gi)).matrix();
        da.segment(d, d) = (dc * s.c_prev.array() * gf * (1.0 - gf)).matrix();
        da.segment(2 * d, d) = (dc * gi * (1.0 - gg.square())).matrix();
        da.segment(3 * d, d) = (dh.array() * tc * go * (1.0 - go)).matrix();
        dw.noalias() += da * s.x.transpose();
        du.noalias() += da * s.h_prev.transpose();
        db_ih += da;
        db_hh += da;
        d_inputs.row(t) = (w.transpose() * da).transpose();
        dh_next = u.transpose() * da;
        dc_next = (dc * gf).matrix();
        break;
      }
      case EncoderKind::gru: {
        const auto r = s.gates.segment(0, d).array();
        const auto z = s.gates.segment(d, d).array();
        const auto nn = s.gates.segment(2 * d, d).array();
        const Eigen::ArrayXd dn = dh.array() * (1.0 - z);
        const Eigen::ArrayXd dz = dh.array() * (s.h_prev.array() - nn);
        const Eigen::ArrayXd dan = dn * (1.0 - nn.square());
        const Eigen::ArrayXd dr = dan * s.gh.segment(2 * d, d).array();
        Vector dgi(3 * d), dgh(3 * d);
        dgi.segment(0, d) = (dr * r * (1.0 - r)).matrix();
        dgi.segment(d, d) = (dz * z * (1.0 - z)).matrix();
        dgi.segment(2 * d, d) = dan.matrix();
        dgh.segment(0, 2 * d) = dgi.segment(0, 2 * d);
        dgh.segment(2 * d, d) = (dan * r).matrix();
        dw.noalias() += dgi * s.x.transpose();
        du.noalias() += dgh * s.h_prev.transpose();
        db_ih += dgi;
        db_hh += dgh;
        d_inputs.row(t) = (w.transpose() * dgi).transpose();
        dh_next = u.transpose() * dgh + (dh.array() * z).matrix();
        break;
      }
      case EncoderKind::self_attention: break;
    }
  }
  return d_inputs;
}

Matrix SequenceEncoder::attention_forward(const ParamStore& params, const Matrix& embedded,
                                          Cache* cache) const {
  const Eigen::Index n = embedded.rows();
  const Matrix& pos = params[positions_];
  Matrix xin = embedded;
  for (Eigen::Index t = 0; t < n; ++t) xin.row(t) += pos.row(std::min<Eigen::Index>(t, pos.rows() - 1));
  const Matrix q = xin * params[att_q_];
  const Matrix k = xin * params[att_k_];
  const Matrix v = xin * params[att_v_];
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.hidden_size));
  const bool causal = config_.direction == Direction::forward;
  Matrix attn = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index last = causal ? i : n - 1;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j <= last; ++j) {
      attn(i, j) = q.row(i).dot(k.row(j)) * scale;
      mx = std::max(mx, attn(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j <= last; ++j) {
      attn(i, j) = std::exp(attn(i, j) - mx);
      sum += attn(i, j);
    }
    for (Eigen::Index j = 0; j <= last; ++j) attn(i, j) /= sum;
  }
  Matrix mixed = attn * v;
  Matrix hidden = xin + mixed * params[att_o_];
  if (cache) {
    cache->xin = std::move(xin);
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->attn = std::move(attn);
    cache->mixed = std::move(mixed);
  }
  return hidden;
}

Matrix SequenceEncoder::attention_backward(const ParamStore& params, const Cache& cache,
                                           const Matrix& d_hidden, ParamStore& grads) const {
  const Eigen::Index n = d_hidden.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.hidden_size));
  grads[att_o_].noalias() += cache.mixed.transpose() * d_hidden;
  const Matrix d_mixed = d_hidden * params[att_o_].transpose();
  const Matrix d_attn = d_mixed * cache.v.transpose();
  const Matrix d_v = cache.attn.transpose() * d_mixed;
  Matrix d_scores = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dot = cache.attn.row(i).dot(d_attn.row(i));
    for (Eigen::Index j = 0; j < n; ++j)
      d_scores(i, j) = cache.attn(i, j) * (d_attn(i, j) - dot) * scale;
  }
  const Matrix d_q = d_scores * cache.k;
  const Matrix d_k = d_scores.transpose() * cache.q;
  grads[att_q_].noalias() += cache.xin.transpose() * d_q;
  grads[att_k_].noalias() += cache.xin.transpose() * d_k;
  grads[att_v_].noalias() += cache.xin.transpose() * d_v;
  Matrix d_xin = d_hidden;
  d_xin.noalias() += d_q * params[att_q_].transpose();
  d_xin.noalias() += d_k * params[att_k_].transpose();
  d_xin.noalias() += d_v * params[att_v_].transpose();
  Matrix& d_pos = grads[positions_];
  for (Eigen::Index t = 0; t < n; ++t) d_pos.row(std::min<Eigen::Index>(t, d_pos.rows() - 1)) += d_xin.row(t);
  return d_xin;
}

Matrix SequenceEncoder::encode(const ParamStore& params, const Matrix& embedded,
                               Cache* cache) const {
  if (embedded.rows() == 0) throw ComputeError("cannot encode an empty sequence");
  Matrix hidden;
  if (config_.kind == EncoderKind::self_attention) {
    hidden = attention_forward(params, embedded, cache);
  } else if (config_.direction == Direction::forward) {
    hidden = run_direction(params, fwd_, embedded, cache ? &cache->fwd : nullptr);
  } else {
    const Eigen::Index n = embedded.rows();
    const Eigen::Index d = static_cast<Eigen::Index>(config_.hidden_size);
    const Matrix hf = run_direction(params, fwd_, embedded, cache ? &cache->fwd : nullptr);
    const Matrix hb_rev =
        run_direction(params, bwd_, embedded.colwise().reverse(), cache ? &cache->bwd : nullptr);
    Matrix concat(n, 2 * d);
    concat.leftCols(d) = hf;
    concat.rightCols(d) = hb_rev.colwise().reverse();
    hidden = concat * params[bi_proj_].transpose();
    hidden.rowwise() += params[bi_bias_].col(0).transpose();
    if (cache) cache->concat = std::move(concat);
  }
  if (cache) cache->hidden = hidden;
  return hidden;
}

Matrix SequenceEncoder::forward(const ParamStore& params, std::span<const Code> codes,
                                Cache& cache) const {
  cache.codes.assign(codes.begin(), codes.end());
  cache.embedded = embed(params, codes);
  return encode(params, cache.embedded, &cache);
}

void SequenceEncoder::backward(const ParamStore& params, const Cache& cache,
                               const Matrix& d_hidden, ParamStore& grads) const {
  Matrix d_embedded;
  if (config_.kind == EncoderKind::self_attention) {
    d_embedded = attention_backward(params, cache, d_hidden, grads);
  } else if (config_.direction == Direction::forward) {
    d_embedded = backprop_direction(params, fwd_, cache.fwd, d_hidden, grads);
  } else {
    const Eigen::Index d = static_cast<Eigen::Index>(config_.hidden_size);
    grads[bi_proj_].noalias() += d_hidden.transpose() * cache.concat;
    grads[bi_bias_].col(0) += d_hidden.colwise().sum().transpose();
    const Matrix d_concat = d_hidden * params[bi_proj_];
    d_embedded = backprop_direction(params, fwd_, cache.fwd, d_concat.leftCols(d), grads);
    const Matrix d_b_rev = d_concat.rightCols(d).colwise().reverse();
    d_embedded += backprop_direction(params, bwd_, cache.bwd, d_b_rev, grads).colwise().reverse();
  }
  Matrix& d_table = grads[embedding_];
  for (std::size_t i = 0; i < cache.codes.size(); ++i)
    d_table.row(cache.codes[i]) += d_embedded.row(static_cast<Eigen::Index>(i));
}

// ---------------------------------------------------------------------------
// AttentivePooling

AttentivePooling::AttentivePooling(std::size_t hidden, std::size_t heads, AttentionNorm norm,
                                   ParamStore& params, std::mt19937_64& rng)
    : hidden_(hidden), heads_(heads), norm_(norm) {
  if (heads == 0 || hidden % heads != 0)
    throw InvalidConfig("hidden size " + std::to_string(hidden) +
                        " is not divisible by the pooling head count " + std::to_string(heads));
  const auto d = static_cast<Eigen::Index>(hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  wq_ = params.add("pooling.wq", random_uniform(d, d, bound, rng));
  wk_ = params.add("pooling.wk", random_uniform(d, d, bound, rng));
  wv_ = params.add("pooling.wv", random_uniform(d, d, bound, rng));
  wo_ = params.add("pooling.wo", random_uniform(d, d, bound, rng));
}

Vector AttentivePooling::forward(const ParamStore& params, const Matrix& hidden,
                                 std::size_t query_pos, Cache& cache) const {
  const Eigen::Index n = hidden.rows();
  const Eigen::Index dk = static_cast<Eigen::Index>(hidden_ / heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  cache.query_pos = query_pos;
  cache.query = hidden.row(static_cast<Eigen::Index>(query_pos)) * params[wq_];
  cache.keys = hidden * params[wk_];
  cache.values = hidden * params[wv_];
  cache.weights.resize(n, static_cast<Eigen::Index>(heads_));
  cache.concat.resize(static_cast<Eigen::Index>(hidden_));
  for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(heads_); ++h) {
    const auto qh = cache.query.segment(h * dk, dk);
    Vector scores = cache.keys.middleCols(h * dk, dk) * qh.transpose() * scale;
    if (norm_ == AttentionNorm::softmax) {
      scores = (scores.array() - scores.maxCoeff()).exp();
      scores /= scores.sum();
    } else {
      const double sum = scores.sum();
      if (std::abs(sum) < kMinScoreSum)
        throw DegenerateNormalization("attention score sum " + std::to_string(sum) +
                                      " too close to zero in head " + std::to_string(h));
      scores /= sum;
    }
    cache.weights.col(h) = scores;
    cache.concat.segment(h * dk, dk) = scores.transpose() * cache.values.middleCols(h * dk, dk);
  }
  return (cache.concat * params[wo_]).transpose();
}

Matrix AttentivePooling::backward(const ParamStore& params, const Matrix& hidden,
                                  const Cache& cache, const Vector& d_out,
                                  ParamStore& grads) const {
  const Eigen::Index n = hidden.rows();
  const Eigen::Index dk = static_cast<Eigen::Index>(hidden_ / heads_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  grads[wo_].noalias() += cache.concat.transpose() * d_out.transpose();
  const RowVector d_concat = d_out.transpose() * params[wo_].transpose();
  Matrix d_keys = Matrix::Zero(n, static_cast<Eigen::Index>(hidden_));
  Matrix d_values = Matrix::Zero(n, static_cast<Eigen::Index>(hidden_));
  RowVector d_query = RowVector::Zero(static_cast<Eigen::Index>(hidden_));
  for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(heads_); ++h) {
    const auto dhead = d_concat.segment(h * dk, dk);
    const auto w = cache.weights.col(h);
    d_values.middleCols(h * dk, dk).noalias() += w * dhead;
    const Vector dw = cache.values.middleCols(h * dk, dk) * dhead.transpose();
    Vector ds;
    if (norm_ == AttentionNorm::softmax) {
      ds = w.cwiseProduct((dw.array() - w.dot(dw)).matrix());
    } else {
      const auto qh = cache.query.segment(h * dk, dk);
      const double sum = (cache.keys.middleCols(h * dk, dk) * qh.transpose()).sum() * scale;
      ds = ((dw.array() - w.dot(dw)) / sum).matrix();
    }
    ds *= scale;
    d_keys.middleCols(h * dk, dk).noalias() += ds * cache.query.segment(h * dk, dk);
    d_query.segment(h * dk, dk) += ds.transpose() * cache.keys.middleCols(h * dk, dk);
  }
  const auto qrow = static_cast<Eigen::Index>(cache.query_pos);
  grads[wq_].noalias() += hidden.row(qrow).transpose() * d_query;
  grads[wk_].noalias() += hidden.transpose() * d_keys;
  grads[wv_].noalias() += hidden.transpose() * d_values;
  Matrix d_hidden = d_keys * params[wk_].transpose();
  d_hidden.noalias() += d_values * params[wv_].transpose();
  d_hidden.row(qrow) += d_query * params[wq_].transpose();
  return d_hidden;
}

Vector mean_pool(const Matrix& hidden) { return hidden.colwise().mean().transpose(); }

Matrix mean_pool_backward(Eigen::Index rows, const Vector& d_out) {
  return (d_out.transpose() / static_cast<double>(rows)).replicate(rows, 1);
}

}  // namespace lan
