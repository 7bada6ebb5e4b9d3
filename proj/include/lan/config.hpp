#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lan/model.hpp"
#include "lan/training.hpp"

namespace lan {

// "key = value" lines; '#' starts a comment. Duplicate keys are rejected.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in,
                                                                  const std::string& origin);
std::vector<std::pair<std::string, std::string>> read_key_value_file(
    const std::filesystem::path& path);

// Every knob of a training run. `data` and `output` have no default and must
// be supplied by the file or a flag.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data;
  std::string output;

  // Throws InvalidConfig for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  // Applies pairs in order, so later sources override earlier ones.
  void apply(const std::vector<std::pair<std::string, std::string>>& pairs);
  void validate() const;
  // Canonical key = value text, sorted by key; parses back to an equal config.
  std::string to_text() const;

  static const std::vector<std::string>& keys();
  // defaults <- file <- overrides
  static RunConfig load(const std::filesystem::path* file,
                        const std::vector<std::pair<std::string, std::string>>& overrides);
};

}  // namespace lan
