#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "lan/common.hpp"
#include "lan/ingest.hpp"
#include "lan/model.hpp"
#include "lan/params.hpp"

namespace lan {

// Rows with q_i = 1 become 0 at the true code and 1/(M-1) elsewhere; other
// rows are copied. Y is B x M one-hot.
Matrix soft_labels(const Matrix& one_hot, std::span<const std::uint8_t> q);
Vector soft_label_row(Code target, std::size_t vocab, bool abnormal);

// w_i = 1 + (r - 1) q_i
Vector sample_weights(std::span<const std::uint8_t> q, double r);

// -(1/B) sum_i w_i sum_j Y'_ij log max(Y^_ij, 1e-12)
double hybrid_loss(const Matrix& predicted, const Matrix& soft, const Vector& weights);

inline double total_loss(double hybrid, double reg) { return hybrid + reg; }

// Each abnormal instance repeated r times, in place of its original.
std::vector<Instance> replicate_abnormal(std::span<const Instance> instances, std::size_t r);

enum class LossMode { weighted, replicate };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view name);

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamStore& params, const AdamWOptions& options);
  void step(ParamStore& params, const ParamStore& grads);
  std::size_t steps() const { return t_; }

 private:
  AdamWOptions options_;
  ParamStore m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::vector<double> lr_grid = {1e-4, 3e-4, 1e-3};
  double weight_decay = 0.01;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 10;
  std::size_t patience = 10;
  std::optional<double> r;  // defaults to the training imbalance ratio
  LossMode loss_mode = LossMode::weighted;
  std::size_t refresh_cadence = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  double lr = 0.0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double seconds = 0.0;
};

void write_training_log(std::ostream& out, std::span<const EpochRecord> records);

struct BatchLoss {
  double hybrid = 0.0;
  double reg = 0.0;
  double total() const { return hybrid + reg; }
};

// Accumulates the full-batch gradient of the total loss into `grads` (which
// is zeroed first) and returns the loss. `weights` holds w_i per instance.
BatchLoss batch_gradient(const LanModel& model, std::span<const Instance> batch,
                         std::span<const double> weights, bool soft, ParamStore& grads);

struct TrainResult {
  LanModel model;
  double best_val_auc = 0.0;
  double best_lr = 0.0;
  double r = 1.0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> log;
  bool diverged = false;
};

// Validation metric: AUC when both classes are present, otherwise the mean
// log-probability of the validation targets.
double validation_metric(const LanModel& model, std::span<const Instance> validation);

using ProgressFn = std::function<void(const EpochRecord&)>;

// Trains one model per learning rate in the grid from the same seed and
// returns the one with the best validation metric. Each run keeps its
// best-epoch parameters.
TrainResult train(const ModelConfig& model_config, std::span<const Instance> train_set,
                  std::span<const Instance> validation, const TrainConfig& config,
                  const ProgressFn& progress = {});

// Imbalance ratio N_normal / N_abnormal over instance labels.
std::optional<double> instance_imbalance_ratio(std::span<const Instance> instances);

}  // namespace lan
