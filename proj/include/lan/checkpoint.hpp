#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lan/common.hpp"
#include "lan/params.hpp"

namespace lan {

// Versioned binary container, all integers little-endian:
//   magic "LANCKPT1", u32 version,
//   u32 metadata count, then per entry: u32 len, key bytes, u32 len, value bytes,
//   u32 tensor count, then per tensor: u32 len, name bytes, u8 dtype,
//   u64 rows, u64 cols, row-major payload.
// dtype 0 is f32 (parameters), dtype 1 is u64 (pool keys, stored as n x 1).
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;

  void put(const std::string& name, const Matrix& value);
  void put_keys(const std::string& name, const std::vector<std::uint64_t>& keys);
  const Matrix& tensor(const std::string& name) const;
  const std::vector<std::uint64_t>& keys(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return tensors_.count(name) != 0; }
  std::vector<std::string> tensor_names() const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  // Copies every parameter of `params` from the same-named tensor; shapes
  // must match.
  void restore_params(ParamStore& params) const;
  void store_params(const ParamStore& params);

 private:
  std::map<std::string, Matrix> tensors_;
  std::map<std::string, std::vector<std::uint64_t>> keys_;
  std::vector<std::string> order_;
};

}  // namespace lan
