#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lan/common.hpp"

namespace lan {

using ParamId = std::size_t;

// Ordered collection of named dense tensors. Vectors are stored as n x 1
// matrices. Gradient buffers are ParamStores with identical layout.
class ParamStore {
 public:
  ParamId add(std::string name, Matrix value);

  Matrix& operator[](ParamId id) { return entries_[id].value; }
  const Matrix& operator[](ParamId id) const { return entries_[id].value; }
  const std::string& name(ParamId id) const { return entries_[id].name; }
  std::optional<ParamId> find(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }

  ParamStore zeros_like() const;
  void set_zero();
  void add_scaled(const ParamStore& other, double scale);
  std::size_t total_elements() const;
  bool all_finite() const;
  bool same_layout(const ParamStore& other) const;

 private:
  struct Entry {
    std::string name;
    Matrix value;
  };
  std::vector<Entry> entries_;
};

// Gaussian init with standard deviation `scale`.
Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng);
// Uniform init in [-bound, bound].
Matrix random_uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng);

}  // namespace lan
