#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lan/common.hpp"
#include "lan/ingest.hpp"
#include "lan/params.hpp"

namespace lan {

enum class PoolMode { trainable, encoder_cache };

std::string_view to_string(PoolMode mode);
PoolMode parse_pool_mode(std::string_view name);

struct AnnOptions {
  std::size_t m = 24;                 // links per node above layer 0; 2m on layer 0
  std::size_t ef_construction = 100;
  std::size_t ef_search = 256;
  std::uint64_t seed = 0x5eed;
};

// Hierarchical navigable small-world graph under cosine distance. Rows are
// normalized on insertion; zero rows stay zero and sit at distance 1 from
// every query. Insertion is sequential, so builds are deterministic.
class HnswIndex {
 public:
  HnswIndex() = default;

  void build(const Matrix& rows, const AnnOptions& options);
  // Up to k row ids ordered by increasing distance. When k >= size() the
  // result is exhaustive and exact.
  std::vector<std::size_t> search(const Vector& query, std::size_t k) const;

  std::size_t size() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::size_t max_level() const { return max_level_; }

 private:
  using Candidate = std::pair<float, std::uint32_t>;

  float distance(const float* a, const float* b) const;
  const float* row(std::uint32_t id) const { return data_.data() + std::size_t{id} * dim_; }
  std::vector<std::uint32_t>& links(std::uint32_t id, std::size_t level) {
    return links_[id][level];
  }
  std::vector<Candidate> search_layer(const float* query, std::uint32_t entry, std::size_t ef,
                                      std::size_t level) const;
  std::vector<std::uint32_t> select_neighbors(const float* base, std::vector<Candidate> candidates,
                                              std::size_t m) const;
  void insert(std::uint32_t id, std::size_t level);
  std::vector<std::size_t> exhaustive(const float* query, std::size_t k) const;

  AnnOptions options_;
  std::size_t dim_ = 0, count_ = 0, max_level_ = 0;
  std::uint32_t entry_ = 0;
  std::vector<float> data_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level]
  mutable std::vector<std::uint32_t> visit_mark_;
  mutable std::uint32_t visit_epoch_ = 0;
};

// Exact top-k under cosine distance, ties broken by lower row id.
std::vector<std::size_t> exact_topk(const Matrix& rows, const Vector& query, std::size_t k);

// FNV-1a over (codes, query position, target). Real-time instances always
// query the last position, so this is the prefix-plus-target key.
std::uint64_t dedup_key(const Instance& instance);

struct NeighborSet {
  std::vector<std::size_t> ids;
  Matrix vectors;  // k x d
};

// Deduplicated pool of normal training activities. In trainable mode the
// vectors are a parameter of the owning ParamStore; in encoder_cache mode
// they are recomputed from the pooled instances by the model.
class VectorPool {
 public:
  VectorPool() = default;

  // One row per distinct key among normal instances, in first-seen order.
  // Throws EmptyPool if no normal instance exists.
  static VectorPool build(std::span<const Instance> instances, std::size_t hidden, PoolMode mode,
                          ParamStore& params, std::mt19937_64& rng,
                          const AnnOptions& ann = {});
  // Restores a pool from stored keys and vectors; the index is rebuilt.
  static VectorPool restore(std::vector<std::uint64_t> keys, Matrix vectors, PoolMode mode,
                            ParamStore& params, const AnnOptions& ann = {});

  const Matrix& vectors(const ParamStore& params) const;
  // Replaces cached vectors (encoder_cache mode only).
  void set_cache(Matrix vectors);
  void refresh_index(const ParamStore& params);
  NeighborSet query(const ParamStore& params, const Vector& query, std::size_t k) const;

  std::size_t size() const { return keys_.size(); }
  const std::vector<std::uint64_t>& keys() const { return keys_; }
  // Instances whose keys define the rows, kept for encoder_cache refreshes.
  const std::vector<Instance>& members() const { return members_; }
  PoolMode mode() const { return mode_; }
  ParamId param_id() const { return param_; }
  std::size_t rebuilds() const { return rebuilds_; }
  const HnswIndex& index() const { return index_; }

 private:
  PoolMode mode_ = PoolMode::trainable;
  AnnOptions ann_;
  std::vector<std::uint64_t> keys_;
  std::vector<Instance> members_;
  ParamId param_ = 0;
  Matrix cache_;
  HnswIndex index_;
  std::size_t rebuilds_ = 0;
};

}  // namespace lan
