#include "lan/pool.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>

namespace lan {

std::string_view to_string(PoolMode mode) {
  return mode == PoolMode::trainable ? "trainable" : "encoder_cache";
}

PoolMode parse_pool_mode(std::string_view name) {
  if (name == "trainable") return PoolMode::trainable;
  if (name == "encoder_cache") return PoolMode::encoder_cache;
  throw InvalidConfig("unknown pool_mode '" + std::string(name) + "'");
}

namespace {

void normalize_into(const double* src, std::size_t dim, float* dst) {
  double norm = 0.0;
  for (std::size_t i = 0; i < dim; ++i) norm += src[i] * src[i];
  norm = std::sqrt(norm);
  const double inv = norm > 0.0 ? 1.0 / norm : 0.0;
  for (std::size_t i = 0; i < dim; ++i) dst[i] = static_cast<float>(src[i] * inv);
}

std::vector<float> normalized(const Vector& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  normalize_into(v.data(), out.size(), out.data());
  return out;
}

}  // namespace

float HnswIndex::distance(const float* a, const float* b) const {
  // Vectorized reduction; summation order is fixed per build, so results stay reproducible.
  using Row = Eigen::Map<const Eigen::VectorXf>;
  const auto n = static_cast<Eigen::Index>(dim_);
  return 1.0f - Row(a, n).dot(Row(b, n));
}

void HnswIndex::build(const Matrix& rows, const AnnOptions& options) {
  if (options.m < 2) throw InvalidConfig("ann_m must be at least 2");
  options_ = options;
  dim_ = static_cast<std::size_t>(rows.cols());
  count_ = static_cast<std::size_t>(rows.rows());
  data_.assign(count_ * dim_, 0.0f);
  // Eigen is column-major; copy each row out before normalizing.
  std::vector<double> buffer(dim_);
  for (std::size_t i = 0; i < count_; ++i) {
    for (std::size_t j = 0; j < dim_; ++j)
      buffer[j] = rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    normalize_into(buffer.data(), dim_, data_.data() + i * dim_);
  }
  links_.assign(count_, {});
  visit_mark_.assign(count_, 0);
  visit_epoch_ = 0;
  max_level_ = 0;
  entry_ = 0;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double level_mult = 1.0 / std::log(static_cast<double>(options.m));
  for (std::size_t i = 0; i < count_; ++i) {
    const double u = std::max(unit(rng), 1e-300);
    const auto level = static_cast<std::size_t>(-std::log(u) * level_mult);
    insert(static_cast<std::uint32_t>(i), level);
  }
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(const float* query, std::uint32_t entry,
                                                          std::size_t ef,
                                                          std::size_t level) const {
  if (++visit_epoch_ == 0) {
    std::fill(visit_mark_.begin(), visit_mark_.end(), 0);
    visit_epoch_ = 1;
  }
  // candidates: min-heap by distance; results: max-heap holding the ef best.
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> candidates;
  std::priority_queue<Candidate> results;
  const float d0 = distance(query, row(entry));
  candidates.emplace(d0, entry);
  results.emplace(d0, entry);
  visit_mark_[entry] = visit_epoch_;
  while (!candidates.empty()) {
    const auto [dist, node] = candidates.top();
    if (dist > results.top().first && results.size() >= ef) break;
    candidates.pop();
    for (std::uint32_t nb : links_[node][level]) {
      if (visit_mark_[nb] == visit_epoch_) continue;
      visit_mark_[nb] = visit_epoch_;
      const float d = distance(query, row(nb));
      if (results.size() < ef || d < results.top().first) {
        candidates.emplace(d, nb);
        results.emplace(d, nb);
        if (results.size() > ef) results.pop();
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(const float* base,
                                                       std::vector<Candidate> candidates,
                                                       std::size_t m) const {
  // Diversity heuristic: keep a candidate only if it is closer to the base
  // than to every neighbor kept so far.
  (void)base;
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> kept;
  std::vector<Candidate> pruned;
  for (const auto& [dist, id] : candidates) {
    if (kept.size() >= m) break;
    bool good = true;
    for (std::uint32_t other : kept) {
      if (distance(row(id), row(other)) < dist) {
        good = false;
        break;
      }
    }
    if (good)
      kept.push_back(id);
    else
      pruned.emplace_back(dist, id);
  }
  for (std::size_t i = 0; i < pruned.size() && kept.size() < m; ++i)
    kept.push_back(pruned[i].second);
  return kept;
}

void HnswIndex::insert(std::uint32_t id, std::size_t level) {
  links_[id].assign(level + 1, {});
  if (id == 0) {
    max_level_ = level;
    entry_ = 0;
    return;
  }
  const float* q = row(id);
  std::uint32_t entry = entry_;
  for (std::size_t l = max_level_; l > level; --l) {
    bool changed = true;
    float best = distance(q, row(entry));
    while (changed) {
      changed = false;
      for (std::uint32_t nb : links_[entry][l]) {
        const float d = distance(q, row(nb));
        if (d < best) {
          best = d;
          entry = nb;
          changed = true;
        }
      }
    }
  }
  for (std::size_t l = std::min(level, max_level_) + 1; l-- > 0;) {
    auto found = search_layer(q, entry, options_.ef_construction, l);
    const std::size_t cap = l == 0 ? 2 * options_.m : options_.m;
    const auto chosen = select_neighbors(q, found, options_.m);
    links(id, l) = chosen;
    for (std::uint32_t nb : chosen) {
      auto& back = links(nb, l);
      back.push_back(id);
      if (back.size() > cap) {
        std::vector<Candidate> cands;
        cands.reserve(back.size());
        for (std::uint32_t x : back) cands.emplace_back(distance(row(nb), row(x)), x);
        back = select_neighbors(row(nb), std::move(cands), cap);
      }
    }
    entry = found.front().second;
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = id;
  }
}

std::vector<std::size_t> HnswIndex::exhaustive(const float* query, std::size_t k) const {
  std::vector<Candidate> all;
  all.reserve(count_);
  for (std::uint32_t i = 0; i < count_; ++i) all.emplace_back(distance(query, row(i)), i);
  const std::size_t take = std::min(k, count_);
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(all[i].second);
  return out;
}

std::vector<std::size_t> HnswIndex::search(const Vector& query, std::size_t k) const {
  if (count_ == 0) throw EmptyPool("PoolTooSmall: search on an empty index");
  if (static_cast<std::size_t>(query.size()) != dim_)
    throw ComputeError("query width does not match the index");
  const auto q = normalized(query);
  if (k >= count_) return exhaustive(q.data(), k);
  std::uint32_t entry = entry_;
  for (std::size_t l = max_level_; l > 0; --l) {
    bool changed = true;
    float best = distance(q.data(), row(entry));
    while (changed) {
      changed = false;
      for (std::uint32_t nb : links_[entry][l]) {
        const float d = distance(q.data(), row(nb));
        if (d < best) {
          best = d;
          entry = nb;
          changed = true;
        }
      }
    }
  }
  const auto found = search_layer(q.data(), entry, std::max(options_.ef_search, k), 0);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < found.size() && out.size() < k; ++i) out.push_back(found[i].second);
  return out;
}

std::vector<std::size_t> exact_topk(const Matrix& rows, const Vector& query, std::size_t k) {
  const Eigen::Index n = rows.rows();
  const double qn = query.norm();
  std::vector<std::pair<double, std::size_t>> all;
  all.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rn = rows.row(i).norm();
    const double cos = (qn > 0.0 && rn > 0.0) ? rows.row(i).dot(query) / (rn * qn) : 0.0;
    all.emplace_back(1.0 - cos, static_cast<std::size_t>(i));
  }
  const std::size_t take = std::min<std::size_t>(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(all[i].second);
  return out;
}

std::uint64_t dedup_key(const Instance& instance) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t value) {
    for (int b = 0; b < 8; ++b) {
      h ^= (value >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(instance.codes.size());
  for (Code c : instance.codes) mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(c)));
  mix(instance.query_pos);
  mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(instance.target)));
  return h;
}

VectorPool VectorPool::build(std::span<const Instance> instances, std::size_t hidden,
                             PoolMode mode, ParamStore& params, std::mt19937_64& rng,
                             const AnnOptions& ann) {
  VectorPool pool;
  pool.mode_ = mode;
  pool.ann_ = ann;
  std::unordered_map<std::uint64_t, std::size_t> seen;
  for (const Instance& inst : instances) {
    if (inst.label != 0) continue;
    const std::uint64_t key = dedup_key(inst);
    if (!seen.emplace(key, pool.keys_.size()).second) continue;
    pool.keys_.push_back(key);
    pool.members_.push_back(inst);
  }
  if (pool.keys_.empty()) throw EmptyPool("no normal training instances to pool");
  const auto rows = static_cast<Eigen::Index>(pool.keys_.size());
  const auto d = static_cast<Eigen::Index>(hidden);
  if (mode == PoolMode::trainable)
    pool.param_ = params.add("pool.vectors",
                             random_normal(rows, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  else
    pool.cache_ = Matrix::Zero(rows, d);
  return pool;
}

VectorPool VectorPool::restore(std::vector<std::uint64_t> keys, Matrix vectors, PoolMode mode,
                               ParamStore& params, const AnnOptions& ann) {
  if (keys.empty()) throw EmptyPool("stored pool is empty");
  if (static_cast<Eigen::Index>(keys.size()) != vectors.rows())
    throw CheckpointError("pool key count does not match vector rows");
  VectorPool pool;
  pool.mode_ = mode;
  pool.ann_ = ann;
  pool.keys_ = std::move(keys);
  if (mode == PoolMode::trainable) {
    if (auto id = params.find("pool.vectors")) {
      params[*id] = std::move(vectors);
      pool.param_ = *id;
    } else {
      pool.param_ = params.add("pool.vectors", std::move(vectors));
    }
  } else {
    pool.cache_ = std::move(vectors);
  }
  pool.refresh_index(params);
  return pool;
}

const Matrix& VectorPool::vectors(const ParamStore& params) const {
  return mode_ == PoolMode::trainable ? params[param_] : cache_;
}

void VectorPool::set_cache(Matrix vectors) {
  if (mode_ != PoolMode::encoder_cache) throw ComputeError("set_cache on a trainable pool");
  cache_ = std::move(vectors);
}

void VectorPool::refresh_index(const ParamStore& params) {
  index_.build(vectors(params), ann_);
  ++rebuilds_;
}

NeighborSet VectorPool::query(const ParamStore& params, const Vector& query, std::size_t k) const {
  if (keys_.empty()) throw EmptyPool("PoolTooSmall: pool is empty");
  if (k == 0) throw InvalidConfig("k must be at least 1");
  NeighborSet out;
  out.ids = index_.search(query, k);
  const Matrix& all = vectors(params);
  out.vectors.resize(static_cast<Eigen::Index>(out.ids.size()), all.cols());
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    out.vectors.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(out.ids[i]));
  return out;
}

}  // namespace lan
