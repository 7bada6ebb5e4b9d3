#pragma once

#include <cstdint>
#include <filesystem>

#include "lan/config.hpp"
#include "lan/ingest.hpp"
#include "lan/model.hpp"

namespace lan {

inline constexpr const char* kModelFile = "model.ckpt";
inline constexpr const char* kPoolFile = "pool.ckpt";

// Writes model.ckpt (all parameters except the pool, plus the run config and
// the type-table hash) and, unless the graph is ablated, pool.ckpt.
void save_model(const std::filesystem::path& dir, const LanModel& model, const RunConfig& config,
                const ActivityTypeTable& types);

struct LoadedModel {
  LanModel model;
  RunConfig config;
  std::uint64_t type_hash = 0;
};

// Throws VocabularyMismatch when `types` is given and its hash differs from
// the one recorded at training time.
LoadedModel load_model(const std::filesystem::path& dir, const ActivityTypeTable* types = nullptr);

}  // namespace lan
