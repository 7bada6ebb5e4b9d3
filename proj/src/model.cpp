#include "lan/model.hpp"

#include <cmath>

namespace lan {

Ablation Ablation::parse(std::string_view letters) {
  Ablation a;
  for (char ch : letters) {
    switch (ch) {
      case 'P': a.pooling = true; break;
      case 'W': a.weight = true; break;
      case 'S': a.similarity = true; break;
      case 'R': a.regularization = true; break;
      case 'H': a.hybrid = true; break;
      case 'G': a.graph = true; break;
      case '-': case '/': case ',': case ' ': break;
      default:
        throw InvalidConfig(std::string("unknown ablation flag '") + ch +
                            "' (expected letters from PWSRHG)");
    }
  }
  return a;
}

std::string Ablation::letters() const {
  std::string out;
  if (pooling) out += 'P';
  if (weight) out += 'W';
  if (similarity) out += 'S';
  if (regularization) out += 'R';
  if (hybrid) out += 'H';
  if (graph) out += 'G';
  return out;
}

std::string_view to_string(DetectMode mode) {
  return mode == DetectMode::real_time ? "rt" : "ph";
}

DetectMode parse_detect_mode(std::string_view name) {
  if (name == "rt" || name == "real_time") return DetectMode::real_time;
  if (name == "ph" || name == "post_hoc") return DetectMode::post_hoc;
  throw InvalidConfig("unknown mode '" + std::string(name) + "' (expected rt or ph)");
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw InvalidConfig("vocabulary must hold at least two codes");
  if (hidden_size == 0) throw InvalidConfig("hidden_size must be positive");
  if (max_len < 1) throw InvalidConfig("max_len must be positive");
  if (pooling_heads == 0 || hidden_size % pooling_heads != 0)
    throw InvalidConfig("hidden_size must be divisible by pooling_heads");
  if (similarity_heads == 0) throw InvalidConfig("similarity_heads must be at least 1");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidConfig("epsilon must lie in [0, 1]");
  if (k == 0) throw InvalidConfig("k must be at least 1");
  if (gnn_layers == 0) throw InvalidConfig("gnn_layers must be at least 1");
  for (double mu : {reg.dirichlet, reg.log_barrier, reg.frobenius})
    if (!std::isfinite(mu) || mu < 0.0) throw InvalidConfig("mu weights must be finite and >= 0");
}

LanModel::LanModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  EncoderConfig enc;
  enc.vocab_size = config_.vocab_size;
  enc.hidden_size = config_.hidden_size;
  enc.kind = config_.encoder;
  enc.direction = config_.direction();
  enc.max_positions = config_.max_len;
  encoder_ = SequenceEncoder(enc, params_, rng);
  if (!config_.ablation.pooling)
    pooling_ = AttentivePooling(config_.hidden_size, config_.pooling_heads,
                                config_.attention_norm, params_, rng);
  if (!config_.ablation.graph) {
    if (!config_.ablation.similarity)
      similarity_ = params_.add(
          "graph.similarity",
          Matrix::Ones(static_cast<Eigen::Index>(config_.similarity_heads),
                       static_cast<Eigen::Index>(config_.hidden_size)) +
              random_uniform(static_cast<Eigen::Index>(config_.similarity_heads),
                             static_cast<Eigen::Index>(config_.hidden_size), 0.1, rng));
    enhancer_ = GraphEnhancer(config_.hidden_size, config_.gnn_layers, config_.gnn, params_, rng);
  }
  head_ = PredictionHead(config_.hidden_size, config_.vocab_size, params_, rng);
}

void LanModel::build_pool(std::span<const Instance> train, std::uint64_t seed) {
  if (config_.ablation.graph) return;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  pool_ = VectorPool::build(train, config_.hidden_size, config_.pool_mode, params_, rng,
                            config_.ann);
  refresh_pool();
}

void LanModel::restore_pool(std::vector<std::uint64_t> keys, Matrix vectors) {
  if (config_.ablation.graph) return;
  pool_ = VectorPool::restore(std::move(keys), std::move(vectors), config_.pool_mode, params_,
                              config_.ann);
}

void LanModel::refresh_pool() {
  if (!pool_) return;
  if (pool_->mode() == PoolMode::encoder_cache && !pool_->members().empty()) {
    const auto& members = pool_->members();
    Matrix cache(static_cast<Eigen::Index>(members.size()),
                 static_cast<Eigen::Index>(config_.hidden_size));
    for (std::size_t i = 0; i < members.size(); ++i)
      cache.row(static_cast<Eigen::Index>(i)) = pooled_representation(members[i]).transpose();
    pool_->set_cache(std::move(cache));
  }
  pool_->refresh_index(params_);
}

Vector LanModel::pooled_representation(const Instance& instance) const {
  SequenceEncoder::Cache cache;
  const Matrix hidden = encoder_.forward(params_, instance.codes, cache);
  if (config_.ablation.pooling) return mean_pool(hidden);
  AttentivePooling::Cache pc;
  return pooling_.forward(params_, hidden, instance.query_pos, pc);
}

ForwardState LanModel::forward(const Instance& instance) const {
  if (instance.codes.empty()) throw ComputeError("instance has no context activities");
  if (instance.query_pos >= instance.codes.size())
    throw ComputeError("query position outside the instance");
  if (instance.target < 0 || static_cast<std::size_t>(instance.target) >= config_.vocab_size)
    throw CodeOutOfRange("target code " + std::to_string(instance.target) +
                         " outside the vocabulary");
  ForwardState s;
  s.hidden = encoder_.forward(params_, instance.codes, s.encoder);
  s.pooled = config_.ablation.pooling
                 ? mean_pool(s.hidden)
                 : pooling_.forward(params_, s.hidden, instance.query_pos, s.pooling);
  if (config_.ablation.graph) {
    s.enhanced = s.pooled;
  } else {
    if (!pool_) throw EmptyPool("model has no vector pool; build or restore it first");
    s.neighbors = pool_->query(params_, s.pooled, config_.k);
    const Eigen::Index n = s.neighbors.vectors.rows() + 1;
    s.nodes.resize(n, s.pooled.size());
    s.nodes.row(0) = s.pooled.transpose();
    s.nodes.bottomRows(n - 1) = s.neighbors.vectors;
    const Matrix plain = Matrix::Ones(1, s.pooled.size());
    const Matrix& w = similarity_ ? params_[*similarity_] : plain;
    s.sim = graph::pairwise_similarity(s.nodes, w, &s.similarity);
    s.adj = graph::threshold_adjacency(s.sim, config_.epsilon);
    if (!config_.ablation.regularization)
      s.reg = graph::graph_reg_loss(s.adj, s.nodes, config_.reg, config_.normalize_laplacian);
    s.enhanced = enhancer_.forward(params_, s.adj, s.nodes, s.gnn);
  }
  s.logits = head_.forward(params_, s.enhanced);
  s.probs = softmax(s.logits);
  return s;
}

double LanModel::score(const Instance& instance) const {
  return forward(instance).probs(instance.target);
}

LanModel::InstanceLoss LanModel::accumulate_gradient(const Instance& instance, const Vector& soft_target,
                                     double loss_weight, double reg_weight,
                                     ParamStore& grads) const {
  constexpr double kLogClamp = 1e-12;
  const ForwardState s = forward(instance);
  const Eigen::Index m = s.probs.size();
  double ce = 0.0;
  Vector d_probs = Vector::Zero(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double y = soft_target(j);
    if (y == 0.0) continue;
    const double p = s.probs(j);
    if (p > kLogClamp) {
      ce -= y * std::log(p);
      d_probs(j) = -loss_weight * y / p;
    } else {
      ce -= y * std::log(kLogClamp);
    }
  }
  const Vector d_logits = (s.probs.array() * (d_probs.array() - s.probs.dot(d_probs))).matrix();
  const Vector d_enhanced = head_.backward(params_, s.enhanced, d_logits, grads);

  Vector d_pooled;
  if (config_.ablation.graph) {
    d_pooled = d_enhanced;
  } else {
    const Eigen::Index n = s.nodes.rows();
    Matrix d_adj = Matrix::Zero(n, n);
    Matrix d_x = Matrix::Zero(n, s.nodes.cols());
    enhancer_.backward(params_, s.adj, s.gnn, d_enhanced, d_adj, d_x, grads);
    if (!config_.ablation.regularization && reg_weight != 0.0)
      graph::graph_reg_loss_backward(s.adj, s.nodes, config_.reg, config_.normalize_laplacian,
                                     reg_weight, d_adj, d_x);
    const Matrix d_sim = graph::threshold_backward(s.adj, d_adj);
    const Matrix plain = Matrix::Ones(1, s.nodes.cols());
    if (similarity_)
      graph::pairwise_similarity_backward(s.nodes, params_[*similarity_], s.similarity, d_sim,
                                          d_x, &grads[*similarity_]);
    else
      graph::pairwise_similarity_backward(s.nodes, plain, s.similarity, d_sim, d_x, nullptr);
    d_pooled = d_x.row(0).transpose();
    if (pool_->mode() == PoolMode::trainable) {
      Matrix& gp = grads[pool_->param_id()];
      for (std::size_t i = 0; i < s.neighbors.ids.size(); ++i)
        gp.row(static_cast<Eigen::Index>(s.neighbors.ids[i])) +=
            d_x.row(static_cast<Eigen::Index>(i) + 1);
    }
  }
  const Matrix d_hidden =
      config_.ablation.pooling
          ? mean_pool_backward(s.hidden.rows(), d_pooled)
          : pooling_.backward(params_, s.hidden, s.pooling, d_pooled, grads);
  encoder_.backward(params_, s.encoder, d_hidden, grads);
  return {ce, s.reg};
}

}  // namespace lan
