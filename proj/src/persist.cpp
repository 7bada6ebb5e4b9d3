#include "lan/persist.hpp"

#include <sstream>

#include "lan/checkpoint.hpp"

namespace lan {

namespace {
constexpr const char* kPoolVectors = "pool.vectors";
constexpr const char* kPoolKeys = "pool.keys";
}  // namespace

void save_model(const std::filesystem::path& dir, const LanModel& model, const RunConfig& config,
                const ActivityTypeTable& types) {
  std::filesystem::create_directories(dir);
  Checkpoint ck;
  ck.metadata["config"] = config.to_text();
  ck.metadata["type_hash"] = std::to_string(types.hash());
  ck.metadata["vocab_size"] = std::to_string(model.config().vocab_size);
  const ParamStore& params = model.params();
  for (ParamId id = 0; id < params.size(); ++id)
    if (params.name(id) != kPoolVectors) ck.put(params.name(id), params[id]);
  ck.save(dir / kModelFile);
  const auto pool_path = dir / kPoolFile;
  if (model.has_pool()) {
    Checkpoint pool;
    pool.metadata["pool_mode"] = std::string(to_string(model.pool().mode()));
    pool.put_keys(kPoolKeys, model.pool().keys());
    pool.put(kPoolVectors, model.pool().vectors(params));
    pool.save(pool_path);
  } else {
    std::filesystem::remove(pool_path);
  }
}

LoadedModel load_model(const std::filesystem::path& dir, const ActivityTypeTable* types) {
  const Checkpoint ck = Checkpoint::load(dir / kModelFile);
  auto meta = [&](const char* key) -> const std::string& {
    auto it = ck.metadata.find(key);
    if (it == ck.metadata.end()) throw CheckpointError(std::string("checkpoint lacks ") + key);
    return it->second;
  };
  LoadedModel out;
  std::istringstream text(meta("config"));
  out.config.apply(parse_key_values(text, "checkpoint config"));
  out.type_hash = std::stoull(meta("type_hash"));
  out.config.model.vocab_size = std::stoull(meta("vocab_size"));
  if (types) {
    if (types->hash() != out.type_hash)
      throw VocabularyMismatch("activity type table differs from the one used in training");
    const bool mask = out.config.model.mode == DetectMode::post_hoc;
    if (types->vocab_size(mask) != out.config.model.vocab_size)
      throw VocabularyMismatch("vocabulary size differs from the checkpoint");
  }
  out.model = LanModel(out.config.model, out.config.train.seed);
  ParamStore& params = out.model.params();
  for (ParamId id = 0; id < params.size(); ++id) {
    const Matrix& src = ck.tensor(params.name(id));
    if (src.rows() != params[id].rows() || src.cols() != params[id].cols())
      throw CheckpointError("shape mismatch for '" + params.name(id) + "'");
    params[id] = src;
  }
  if (!out.config.model.ablation.graph) {
    const Checkpoint pool = Checkpoint::load(dir / kPoolFile);
    out.model.restore_pool(pool.keys(kPoolKeys), pool.tensor(kPoolVectors));
  }
  return out;
}

}  // namespace lan
