#include "lan/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace lan {

std::vector<Instance> detection_instances(const ModelConfig& config,
                                          std::span<const Session> sessions) {
  std::vector<Instance> out;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    auto batch = config.mode == DetectMode::real_time
                     ? make_rt_subsequences(sessions[s], config.max_len, s)
                     : make_ph_instances(sessions[s], config.mask_code(), config.max_len, s);
    std::move(batch.begin(), batch.end(), std::back_inserter(out));
  }
  return out;
}

DetectResult detect(const LanModel& model, std::span<const Session> sessions, DetectMode mode) {
  if (mode != model.config().mode)
    throw ModeMismatch(std::string("requested ") + std::string(to_string(mode)) +
                       " detection but the model was trained for " +
                       std::string(to_string(model.config().mode)) +
                       (mode == DetectMode::post_hoc ? " (post-hoc needs a bidirectional model)"
                                                     : ""));
  const auto instances = detection_instances(model.config(), sessions);
  DetectResult result;
  result.scores.reserve(instances.size());
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  for (const Instance& inst : instances) {
    ScoredActivity s;
    s.user_id = sessions[inst.session].user_id;
    s.timestamp = inst.timestamp;
    s.code = inst.target;
    s.probability = model.score(inst);
    s.label = inst.label;
    s.mode = mode;
    s.session = inst.session;
    s.position = inst.position;
    result.scores.push_back(std::move(s));
  }
  const std::chrono::duration<double, std::milli> elapsed = Clock::now() - start;
  if (!instances.empty()) result.mean_latency_ms = elapsed.count() / instances.size();
  return result;
}

RocCurve roc_and_auc(std::span<const double> probabilities,
                     std::span<const std::uint8_t> labels) {
  if (probabilities.size() != labels.size())
    throw ComputeError("score and label counts differ");
  RocCurve curve;
  for (auto l : labels) (l ? curve.positives : curve.negatives)++;
  if (curve.positives == 0 || curve.negatives == 0)
    throw DegenerateLabels("ROC needs both normal and abnormal activities");
  std::vector<std::size_t> order(probabilities.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return probabilities[a] < probabilities[b]; });
  const double pos = static_cast<double>(curve.positives);
  const double neg = static_cast<double>(curve.negatives);
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 0.0, 0, 0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = probabilities[order[i]];
    const std::size_t tp0 = tp, fp0 = fp;
    while (i < order.size() && probabilities[order[i]] == t) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    // Trapezoid over a tie group: ties contribute one half.
    area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) / 2.0;
    curve.points.push_back({t, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, tp,
                            fp});
  }
  curve.auc = area / (pos * neg);
  return curve;
}

OperatingPoint youden_threshold(const RocCurve& curve) {
  if (curve.points.empty()) throw ComputeError("empty ROC curve");
  // DR - FPR compared exactly as tp * N - fp * P.
  const auto scaled_j = [&](const RocPoint& p) {
    return static_cast<long long>(p.tp) * static_cast<long long>(curve.negatives) -
           static_cast<long long>(p.fp) * static_cast<long long>(curve.positives);
  };
  const RocPoint* best = &curve.points.front();
  for (const RocPoint& p : curve.points) {
    const long long j = scaled_j(p), jb = scaled_j(*best);
    if (j > jb || (j == jb && p.fp < best->fp)) best = &p;
  }
  OperatingPoint op;
  op.threshold = best->threshold;
  op.tp = best->tp;
  op.fp = best->fp;
  op.fn = curve.positives - best->tp;
  op.tn = curve.negatives - best->fp;
  op.dr = best->dr;
  op.fpr = best->fpr;
  return op;
}

double dr_at_budget(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                    std::span<const std::int64_t> timestamps, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw InvalidConfig("budget fraction must lie in (0, 1]");
  const std::size_t n = probabilities.size();
  if (labels.size() != n || timestamps.size() != n)
    throw ComputeError("score, label and timestamp counts differ");
  const std::size_t positives =
      static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (positives == 0) throw DegenerateLabels("budgeted detection rate needs anomalies");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probabilities[a] != probabilities[b]) return probabilities[a] < probabilities[b];
    return timestamps[a] < timestamps[b];
  });
  // Guard against fraction * n landing a hair above an integer.
  const auto flagged = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < flagged; ++i) hits += labels[order[i]] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(positives);
}

EvalReport evaluate(std::span<const ScoredActivity> scores, double latency_ms) {
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;
  std::vector<std::int64_t> times;
  for (const auto& s : scores) {
    probs.push_back(s.probability);
    labels.push_back(s.label);
    times.push_back(s.timestamp);
  }
  EvalReport r;
  r.mode = scores.empty() ? "rt" : std::string(to_string(scores.front().mode));
  r.activities = scores.size();
  const RocCurve curve = roc_and_auc(probs, labels);
  const OperatingPoint op = youden_threshold(curve);
  r.auc = curve.auc;
  r.dr = op.dr;
  r.fpr = op.fpr;
  r.threshold = op.threshold;
  r.tp = op.tp;
  r.fp = op.fp;
  r.tn = op.tn;
  r.fn = op.fn;
  r.dr_at_5 = dr_at_budget(probs, labels, times, 0.05);
  r.dr_at_10 = dr_at_budget(probs, labels, times, 0.10);
  r.dr_at_15 = dr_at_budget(probs, labels, times, 0.15);
  r.latency_ms = latency_ms;
  return r;
}

void write_report(std::ostream& out, const EvalReport& r) {
  out << std::setprecision(17);
  out << "mode=" << r.mode << '\n'
      << "activities=" << r.activities << '\n'
      << "auc=" << r.auc << '\n'
      << "dr=" << r.dr << '\n'
      << "fpr=" << r.fpr << '\n'
      << "threshold=" << r.threshold << '\n'
      << "dr_at_5=" << r.dr_at_5 << '\n'
      << "dr_at_10=" << r.dr_at_10 << '\n'
      << "dr_at_15=" << r.dr_at_15 << '\n'
      << "tp=" << r.tp << '\n'
      << "fp=" << r.fp << '\n'
      << "tn=" << r.tn << '\n'
      << "fn=" << r.fn << '\n'
      << "latency_ms=" << r.latency_ms << '\n';
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open report " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto num = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw MalformedRecord(std::string("report lacks ") + key);
    return std::stod(it->second);
  };
  EvalReport r;
  r.mode = kv["mode"];
  r.activities = static_cast<std::size_t>(num("activities"));
  r.auc = num("auc");
  r.dr = num("dr");
  r.fpr = num("fpr");
  r.threshold = num("threshold");
  r.dr_at_5 = num("dr_at_5");
  r.dr_at_10 = num("dr_at_10");
  r.dr_at_15 = num("dr_at_15");
  r.tp = static_cast<std::size_t>(num("tp"));
  r.fp = static_cast<std::size_t>(num("fp"));
  r.tn = static_cast<std::size_t>(num("tn"));
  r.fn = static_cast<std::size_t>(num("fn"));
  r.latency_ms = num("latency_ms");
  return r;
}

void write_roc(std::ostream& out, const RocCurve& curve) {
  out << std::setprecision(17) << "threshold,fpr,dr\n";
  for (const auto& p : curve.points) out << p.threshold << ',' << p.fpr << ',' << p.dr << '\n';
}

void write_scores(std::ostream& out, std::span<const ScoredActivity> scores) {
  out << std::setprecision(17) << "user_id,timestamp,code,probability,label,mode\n";
  for (const auto& s : scores)
    out << s.user_id << ',' << format_timestamp(s.timestamp) << ',' << s.code << ','
        << s.probability << ',' << int{s.label} << ',' << to_string(s.mode) << '\n';
}

std::vector<ScoredActivity> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scores " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ScoredActivity> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6)
      throw MalformedRecord(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    ScoredActivity s;
    s.user_id = f[0];
    s.timestamp = parse_timestamp(f[1]);
    try {
      s.code = static_cast<Code>(std::stol(f[2]));
      s.probability = std::stod(f[3]);
      s.label = static_cast<std::uint8_t>(std::stoi(f[4]));
    } catch (const std::exception&) {
      throw MalformedRecord(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    s.mode = parse_detect_mode(f[5]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lan
