#include "lan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "lan/evaluation.hpp"

namespace lan {

namespace {
constexpr double kLogClamp = 1e-12;
}

Vector soft_label_row(Code target, std::size_t vocab, bool abnormal) {
  const auto m = static_cast<Eigen::Index>(vocab);
  if (target < 0 || target >= m) throw CodeOutOfRange("target outside the vocabulary");
  Vector row;
  if (abnormal) {
    row = Vector::Constant(m, 1.0 / static_cast<double>(vocab - 1));
    row(target) = 0.0;
  } else {
    row = Vector::Zero(m);
    row(target) = 1.0;
  }
  return row;
}

Matrix soft_labels(const Matrix& one_hot, std::span<const std::uint8_t> q) {
  if (static_cast<std::size_t>(one_hot.rows()) != q.size())
    throw ComputeError("label and flag counts differ");
  Matrix out = one_hot;
  const double fill = 1.0 / static_cast<double>(one_hot.cols() - 1);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!q[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = one_hot(i, j) == 1.0 ? 0.0 : fill;
  }
  return out;
}

Vector sample_weights(std::span<const std::uint8_t> q, double r) {
  if (!(r >= 1.0)) throw InvalidConfig("r must be at least 1");
  Vector w(static_cast<Eigen::Index>(q.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    w(static_cast<Eigen::Index>(i)) = 1.0 + (r - 1.0) * (q[i] ? 1.0 : 0.0);
  return w;
}

double hybrid_loss(const Matrix& predicted, const Matrix& soft, const Vector& weights) {
  const Eigen::Index b = predicted.rows();
  if (b == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < predicted.cols(); ++j)
      if (soft(i, j) != 0.0) row += soft(i, j) * std::log(std::max(predicted(i, j), kLogClamp));
    total += weights(i) * row;
  }
  return -total / static_cast<double>(b);
}

std::vector<Instance> replicate_abnormal(std::span<const Instance> instances, std::size_t r) {
  if (r == 0) throw InvalidConfig("replication factor must be positive");
  std::vector<Instance> out;
  out.reserve(instances.size());
  for (const Instance& inst : instances) {
    const std::size_t copies = inst.label ? r : 1;
    for (std::size_t c = 0; c < copies; ++c) out.push_back(inst);
  }
  return out;
}

std::string_view to_string(LossMode mode) {
  return mode == LossMode::weighted ? "weighted" : "replicate";
}

LossMode parse_loss_mode(std::string_view name) {
  if (name == "weighted") return LossMode::weighted;
  if (name == "replicate") return LossMode::replicate;
  throw InvalidConfig("unknown loss_mode '" + std::string(name) + "'");
}

AdamW::AdamW(const ParamStore& params, const AdamWOptions& options)
    : options_(options), m_(params.zeros_like()), v_(params.zeros_like()) {}

void AdamW::step(ParamStore& params, const ParamStore& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (ParamId id = 0; id < params.size(); ++id) {
    Matrix& p = params[id];
    const Matrix& g = grads[id];
    Matrix& m = m_[id];
    Matrix& v = v_[id];
    m = options_.beta1 * m + (1.0 - options_.beta1) * g;
    v = options_.beta2 * v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    p *= 1.0 - options_.lr * options_.weight_decay;
    p.array() -= options_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + options_.eps);
  }
}

void TrainConfig::validate() const {
  if (lr_grid.empty()) throw InvalidConfig("lr_grid must name at least one learning rate");
  for (double lr : lr_grid)
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidConfig("learning rates must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidConfig("weight_decay must be non-negative");
  if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
  if (max_epochs == 0) throw InvalidConfig("max_epochs must be positive");
  if (patience == 0) throw InvalidConfig("patience must be at least 1");
  if (r && !(*r >= 1.0)) throw InvalidConfig("r must be at least 1");
  if (refresh_cadence == 0) throw InvalidConfig("refresh_cadence must be positive");
}

void write_training_log(std::ostream& out, std::span<const EpochRecord> records) {
  out << std::setprecision(10) << "lr,epoch,train_loss,val_auc,seconds\n";
  for (const auto& r : records)
    out << r.lr << ',' << r.epoch << ',' << r.train_loss << ',' << r.val_auc << ',' << r.seconds
        << '\n';
}

BatchLoss batch_gradient(const LanModel& model, std::span<const Instance> batch,
                         std::span<const double> weights, bool soft, ParamStore& grads) {
  grads.set_zero();
  BatchLoss loss;
  if (batch.empty()) return loss;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const std::size_t vocab = model.config().vocab_size;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Instance& inst = batch[i];
    const Vector target = soft_label_row(inst.target, vocab, soft && inst.label != 0);
    const auto l = model.accumulate_gradient(inst, target, weights[i] * inv_b, inv_b, grads);
    loss.hybrid += weights[i] * l.cross_entropy * inv_b;
    loss.reg += l.reg * inv_b;
  }
  return loss;
}

std::optional<double> instance_imbalance_ratio(std::span<const Instance> instances) {
  std::size_t abnormal = 0;
  for (const auto& inst : instances) abnormal += inst.label ? 1 : 0;
  if (abnormal == 0) return std::nullopt;
  return static_cast<double>(instances.size() - abnormal) / static_cast<double>(abnormal);
}

double validation_metric(const LanModel& model, std::span<const Instance> validation) {
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;
  probs.reserve(validation.size());
  bool has_pos = false, has_neg = false;
  for (const auto& inst : validation) {
    probs.push_back(model.score(inst));
    labels.push_back(inst.label);
    (inst.label ? has_pos : has_neg) = true;
  }
  if (has_pos && has_neg) return roc_and_auc(probs, labels).auc;
  if (probs.empty()) return 0.0;
  double ll = 0.0;
  for (double p : probs) ll += std::log(std::max(p, kLogClamp));
  return ll / static_cast<double>(probs.size());
}

namespace {

struct RunOutcome {
  ParamStore best;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  bool diverged = false;
};

RunOutcome run_one(LanModel& model, std::span<const Instance> train_set,
                   std::span<const double> weights, bool soft,
                   std::span<const Instance> validation, const TrainConfig& config, double lr,
                   std::vector<EpochRecord>& log, const ProgressFn& progress) {
  using Clock = std::chrono::steady_clock;
  AdamWOptions opt;
  opt.lr = lr;
  opt.weight_decay = config.weight_decay;
  AdamW optimizer(model.params(), opt);
  ParamStore grads = model.params().zeros_like();
  std::mt19937_64 rng(config.seed ^ 0xa5a5a5a5ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Instance> batch;
  std::vector<double> batch_w;
  RunOutcome out;
  out.best = model.params();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = Clock::now();
    if (epoch > 1 && (epoch - 1) % config.refresh_cadence == 0) model.refresh_pool();
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      batch.clear();
      batch_w.clear();
      for (std::size_t i = b; i < end; ++i) {
        batch.push_back(train_set[order[i]]);
        batch_w.push_back(weights[order[i]]);
      }
      const BatchLoss loss = batch_gradient(model, batch, batch_w, soft, grads);
      if (!std::isfinite(loss.total()) || !grads.all_finite()) {
        out.diverged = true;
        break;
      }
      optimizer.step(model.params(), grads);
      if (!model.params().all_finite()) {
        out.diverged = true;
        break;
      }
      epoch_loss += loss.total() * static_cast<double>(end - b);
      seen += end - b;
    }
    if (out.diverged) break;
    EpochRecord rec;
    rec.lr = lr;
    rec.epoch = epoch;
    rec.train_loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
    rec.val_auc = validation_metric(model, validation);
    rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    log.push_back(rec);
    if (progress) progress(rec);
    if (rec.val_auc > out.best_metric) {
      out.best_metric = rec.val_auc;
      out.best_epoch = epoch;
      out.best = model.params();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return out;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, std::span<const Instance> train_set,
                  std::span<const Instance> validation, const TrainConfig& config,
                  const ProgressFn& progress) {
  config.validate();
  model_config.validate();
  if (train_set.empty()) throw EmptySplit("training split has no instances");
  TrainResult result;
  const auto ir = instance_imbalance_ratio(train_set);
  double r = config.r.value_or(ir.value_or(1.0));
  if (model_config.ablation.weight) r = 1.0;
  result.r = r;
  const bool soft = !model_config.ablation.hybrid;

  std::vector<Instance> replicated;
  std::span<const Instance> effective = train_set;
  std::vector<double> weights;
  if (config.loss_mode == LossMode::replicate) {
    replicated = replicate_abnormal(train_set, static_cast<std::size_t>(std::llround(r)));
    effective = replicated;
    weights.assign(replicated.size(), 1.0);
  } else {
    weights.reserve(train_set.size());
    for (const auto& inst : train_set) weights.push_back(inst.label ? r : 1.0);
  }

  bool have_best = false;
  double best_metric = -std::numeric_limits<double>::infinity();
  for (double lr : config.lr_grid) {
    LanModel model(model_config, config.seed);
    model.build_pool(train_set, config.seed);
    RunOutcome run =
        run_one(model, effective, weights, soft, validation, config, lr, result.log, progress);
    result.diverged = result.diverged || run.diverged;
    if (!have_best || run.best_metric > best_metric) {
      have_best = true;
      best_metric = run.best_metric;
      model.params() = std::move(run.best);
      model.refresh_pool();
      result.model = std::move(model);
      result.best_val_auc = run.best_metric;
      result.best_lr = lr;
      result.best_epoch = run.best_epoch;
    }
  }
  return result;
}

}  // namespace lan
