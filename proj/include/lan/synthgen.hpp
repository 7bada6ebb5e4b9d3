#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lan/ingest.hpp"

namespace lan::synth {

// Activity types every generated log uses, in type-id order.
const std::vector<std::string>& type_entries();

// Markov behavior of one role over the non-session activity types (type ids
// 2.. in type_entries()). Every row is a probability distribution.
struct Profile {
  std::string name;
  std::array<double, 24> start_hour{};      // session start hour
  std::vector<double> initial;              // first activity after logon
  std::vector<std::vector<double>> transition;
  double mean_length = 6.0;                 // activities between logon and logoff
  double night_shift = 0.0;                 // chance a session starts at night
};

const std::vector<Profile>& builtin_profiles();
const Profile& builtin_profile(const std::string& name);
// Throws InvalidConfig unless every row sums to 1 within 1e-9 and is
// non-negative.
void validate_profile(const Profile& profile);

enum class Pattern { off_hours, device_exfiltration, rare_type };

std::string_view to_string(Pattern p);
Pattern parse_pattern(std::string_view name);

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t days = 60;
  std::string start_date = "2010-01-04";
  std::vector<std::string> profiles = {"office", "engineer", "it_admin"};
  double anomaly_rate = 0.005;
  std::vector<Pattern> anomaly_patterns = {Pattern::off_hours, Pattern::device_exfiltration,
                                           Pattern::rare_type};
  std::size_t malicious_users = 10;
  double attendance = 0.9;  // chance a user works on a given weekday
  std::uint64_t seed = 7;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;
  static SynthConfig load(const std::filesystem::path& path);

  std::int64_t start_timestamp() const;
};

struct SynthStats {
  std::size_t events = 0;
  std::size_t abnormal = 0;
  std::size_t sessions = 0;
  std::size_t episodes = 0;
  double imbalance_ratio() const {
    return abnormal ? static_cast<double>(events - abnormal) / static_cast<double>(abnormal) : 0.0;
  }
};

// Writes logon/device/file/http/email .csv files, answers.csv (one
// "source,id" line per injected event), types.txt and synth.conf (config
// echo) into `out_dir`.
SynthStats generate(const SynthConfig& config, const std::filesystem::path& out_dir);

// Split boundaries matching a generated corpus: the first two thirds of the
// days train (last tenth of that validates), the rest test.
SplitConfig default_split(const SynthConfig& config);

}  // namespace lan::synth
