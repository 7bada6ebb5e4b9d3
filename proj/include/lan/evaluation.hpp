#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lan/common.hpp"
#include "lan/ingest.hpp"
#include "lan/model.hpp"

namespace lan {

struct ScoredActivity {
  std::string user_id;
  std::int64_t timestamp = 0;
  Code code = 0;
  double probability = 0.0;  // lower = more anomalous
  std::uint8_t label = 0;
  DetectMode mode = DetectMode::real_time;
  std::size_t session = 0;
  std::size_t position = 0;  // 1-based
};

struct DetectResult {
  std::vector<ScoredActivity> scores;
  double mean_latency_ms = 0.0;
};

// Builds the instances the model's mode calls for from each session.
std::vector<Instance> detection_instances(const ModelConfig& config,
                                          std::span<const Session> sessions);

// Real-time: l-1 scores per session, each from its prefix only.
// Post-hoc: l scores per session via masking. Fails with ModeMismatch when
// the requested mode differs from the model's.
DetectResult detect(const LanModel& model, std::span<const Session> sessions, DetectMode mode);

struct RocPoint {
  double threshold = 0.0;  // flag p <= threshold
  double fpr = 0.0;
  double dr = 0.0;
  std::size_t tp = 0, fp = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  std::size_t positives = 0, negatives = 0;
  double auc = 0.0;
};

// Sweeps every unique probability as a threshold. Throws DegenerateLabels
// if only one class is present.
RocCurve roc_and_auc(std::span<const double> probabilities, std::span<const std::uint8_t> labels);

struct OperatingPoint {
  double threshold = 0.0;
  double dr = 0.0, fpr = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Maximizes DR - FPR over the sweep; ties go to the lower FPR.
OperatingPoint youden_threshold(const RocCurve& curve);

// Flags the ceil(fraction * N) lowest-probability activities, breaking ties
// at the cutoff by earlier timestamp, then by input order.
double dr_at_budget(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                    std::span<const std::int64_t> timestamps, double fraction);

struct EvalReport {
  std::string mode;
  std::size_t activities = 0;
  double auc = 0.0;
  double dr = 0.0, fpr = 0.0, threshold = 0.0;
  double dr_at_5 = 0.0, dr_at_10 = 0.0, dr_at_15 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double latency_ms = 0.0;
};

EvalReport evaluate(std::span<const ScoredActivity> scores, double latency_ms = 0.0);

void write_report(std::ostream& out, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);
void write_roc(std::ostream& out, const RocCurve& curve);

// Delimited scored output: user_id,timestamp,code,probability,label,mode
void write_scores(std::ostream& out, std::span<const ScoredActivity> scores);
std::vector<ScoredActivity> read_scores(const std::filesystem::path& path);

}  // namespace lan
