// Independent reference implementations used by the unit and acceptance
// suites. Each oracle is written directly from its defining formula and
// shares no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lan/common.hpp"
#include "lan/ingest.hpp"
#include "lan/params.hpp"

namespace lan::oracle {

// (1/2) sum_ij A_ij ||x_i - x_j||^2
inline double dirichlet_double_sum(const Matrix& a, const Matrix& x) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      double sq = 0.0;
      for (Eigen::Index f = 0; f < x.cols(); ++f) sq += (x(i, f) - x(j, f)) * (x(i, f) - x(j, f));
      total += a(i, j) * sq;
    }
  return 0.5 * total;
}

// Same sum with each x_i scaled by 1/sqrt(deg_i); the degree-normalized
// Laplacian quadratic form.
inline double normalized_dirichlet_double_sum(const Matrix& a, const Matrix& x) {
  Matrix scaled = x;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double deg = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) deg += a(i, j);
    scaled.row(i) /= std::sqrt(std::max(deg, 1e-12));
  }
  return dirichlet_double_sum(a, scaled);
}

inline double log_barrier_direct(const Matrix& a) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) row += a(i, j);
    total -= std::log(row + 1e-12);
  }
  return total;
}

inline double frobenius_direct(const Matrix& a) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) total += a(i, j) * a(i, j);
  return total;
}

// Scalar evaluation of the multi-head weighted cosine for one pair, with
// zero-norm weighted rows contributing 0.
inline double weighted_cosine(const Matrix& x, const Matrix& w, Eigen::Index i, Eigen::Index j) {
  double total = 0.0;
  for (Eigen::Index z = 0; z < w.rows(); ++z) {
    double dot = 0.0, ni = 0.0, nj = 0.0;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      const double a = x(i, f) * w(z, f), b = x(j, f) * w(z, f);
      dot += a * b;
      ni += a * a;
      nj += b * b;
    }
    ni = std::sqrt(ni);
    nj = std::sqrt(nj);
    if (ni >= 1e-12 && nj >= 1e-12) total += dot / (ni * nj);
  }
  return total / static_cast<double>(w.rows());
}

// Double loop over -(1/B) sum_i w_i sum_j Y'_ij log max(P_ij, 1e-12)
inline double hybrid_loss_loop(const Matrix& p, const Matrix& y, const std::vector<double>& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) row += y(i, j) * std::log(std::max(p(i, j), 1e-12));
    total += w[static_cast<std::size_t>(i)] * row;
  }
  return -total / static_cast<double>(p.rows());
}

// Pairwise rank statistic where positives (label 1) should carry the lower
// probability: P(p_pos < p_neg) + 1/2 P(p_pos = p_neg).
inline double pairwise_auc(const std::vector<double>& p, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < p.size(); ++i) (labels[i] ? pos : neg)++;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (labels[j]) continue;
      if (p[i] < p[j]) wins += 1.0;
      else if (p[i] == p[j]) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

struct YoudenPoint {
  double threshold = 0.0, dr = 0.0, fpr = 0.0;
};

// Tries every observed value (and "flag nothing") as a threshold p <= t.
inline YoudenPoint youden_bruteforce(const std::vector<double>& p,
                                     const std::vector<std::uint8_t>& labels) {
  std::vector<double> candidates = p;
  candidates.push_back(-INFINITY);
  std::size_t pos = 0, neg = 0;
  for (auto l : labels) (l ? pos : neg)++;
  YoudenPoint best{0.0, 0.0, 0.0};
  double best_j = -2.0;
  for (double t : candidates) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] <= t) (labels[i] ? tp : fp)++;
    const double dr = static_cast<double>(tp) / pos, fpr = static_cast<double>(fp) / neg;
    const double j = dr - fpr;
    if (j > best_j + 1e-15 || (std::abs(j - best_j) <= 1e-15 && fpr < best.fpr)) {
      best_j = j;
      best = {t, dr, fpr};
    }
  }
  return best;
}

// Sort-and-count: rank by (probability, timestamp, input order), flag the
// first ceil(percent * N / 100).
inline double dr_at_percent(const std::vector<double>& p, const std::vector<std::uint8_t>& labels,
                            const std::vector<std::int64_t>& ts, int percent) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p[a] != p[b]) return p[a] < p[b];
    if (ts[a] != ts[b]) return ts[a] < ts[b];
    return a < b;
  });
  const std::size_t n = p.size();
  const std::size_t flagged = (static_cast<std::size_t>(percent) * n + 99) / 100;
  std::size_t hit = 0, total = 0;
  for (auto l : labels) total += l;
  for (std::size_t i = 0; i < flagged; ++i) hit += labels[order[i]];
  return static_cast<double>(hit) / static_cast<double>(total);
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates where the perturbation changed discrete structure
  std::string worst;        // "<param>[flat] analytic numeric" of the max_rel coordinate
};

inline std::string fmt_sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", x);
  return buf;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Central differences on `samples` random entries of every parameter.
// `loss` evaluates the objective at the current parameter values;
// `stable`, when given, reports whether the discrete structure (retrieved
// neighbors, thresholded support) matches the unperturbed point.
inline GradCheck check_gradients(ParamStore& params, const ParamStore& analytic,
                                 const std::function<double()>& loss, std::mt19937_64& rng,
                                 std::size_t samples, double h = 1e-3,
                                 const std::function<bool()>& stable = {}) {
  GradCheck out;
  for (ParamId id = 0; id < params.size(); ++id) {
    Matrix& m = params[id];
    const auto n = static_cast<std::size_t>(m.size());
    if (n == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t s = 0; s < std::min(samples, n); ++s) {
      const std::size_t flat = pick(rng);
      double& v = m.data()[flat];
      const double saved = v;
      // Fourth-order central stencil; the structure must hold at every probe.
      double f[4];
      bool ok = true;
      const double offsets[4] = {2.0 * h, h, -h, -2.0 * h};
      for (int i = 0; i < 4; ++i) {
        v = saved + offsets[i];
        f[i] = loss();
        ok = ok && (!stable || stable());
      }
      v = saved;
      if (!ok) {
        ++out.skipped;
        continue;
      }
      const double numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
      const double rel = relative_error(analytic[id].data()[flat], numeric);
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = params.name(id) + "[" + std::to_string(flat) + "] " +
                    fmt_sci(analytic[id].data()[flat]) + " " + fmt_sci(numeric);
      }
      ++out.checked;
    }
  }
  return out;
}

// Session of `n` activities for user `user` with random non-session codes
// between a logon and (optionally) a logoff.
inline Session random_session(std::mt19937_64& rng, std::size_t n, std::size_t n_types,
                              std::int64_t start, const std::string& user = "U1") {
  Session s;
  s.user_id = user;
  std::uniform_int_distribution<int> type(2, static_cast<int>(n_types) - 1);
  std::uniform_int_distribution<int> hour(8, 17);
  for (std::size_t i = 0; i < n; ++i) {
    const int t = i == 0 ? 0 : type(rng);
    s.codes.push_back(encode_activity(t, hour(rng)));
    s.labels.push_back(0);
    s.timestamps.push_back(start + static_cast<std::int64_t>(i) * 600);
    s.sources.push_back(i == 0 ? Source::logon : Source::file);
  }
  return s;
}

}  // namespace lan::oracle
