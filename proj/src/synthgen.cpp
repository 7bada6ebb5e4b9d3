#include "lan/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "lan/config.hpp"

namespace lan::synth {

namespace {

// Body type indices (type id minus 2).
enum Body : int {
  kConnect, kDisconnect, kOpen, kCopy, kWrite, kDelete, kVisit, kDownload, kUpload, kSend,
  kBodyCount
};
constexpr int kLogonType = 0;
constexpr int kLogoffType = 1;
constexpr int kFirstBody = 2;

// Portable generator helpers: libstdc++ distributions are not specified
// bit-for-bit, so sampling is done by hand on top of the raw engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }
  int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  template <typename Weights>
  std::size_t pick(const Weights& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = uniform() * total;
    for (std::size_t i = 0; i < std::size(w); ++i) {
      if (u < w[i]) return i;
      u -= w[i];
    }
    for (std::size_t i = std::size(w); i-- > 0;)
      if (w[i] > 0.0) return i;
    return 0;
  }

 private:
  std::mt19937_64 engine_;
};

std::vector<double> row(std::initializer_list<std::pair<Body, double>> weights) {
  std::vector<double> r(kBodyCount, 0.0);
  double total = 0.0;
  for (auto [b, w] : weights) {
    r[b] += w;
    total += w;
  }
  for (double& x : r) x /= total;
  return r;
}

std::array<double, 24> hours(std::initializer_list<std::pair<int, double>> weights) {
  std::array<double, 24> h{};
  double total = 0.0;
  for (auto [hour, w] : weights) {
    h[static_cast<std::size_t>(hour)] += w;
    total += w;
  }
  for (double& x : h) x /= total;
  return h;
}

std::vector<Profile> make_profiles() {
  std::vector<Profile> out;
  {
    Profile p;
    p.name = "office";
    p.start_hour = hours({{7, 2}, {8, 5}, {9, 3}, {10, 1}});
    p.initial = row({{kVisit, 4}, {kSend, 4}, {kOpen, 2}, {kConnect, 0.2}});
    p.transition = {
        row({{kOpen, 3}, {kCopy, 1}, {kDisconnect, 2}}),
        row({{kVisit, 3}, {kSend, 3}, {kOpen, 2}}),
        row({{kWrite, 3}, {kSend, 2}, {kVisit, 2}, {kOpen, 1}, {kCopy, 0.3}}),
        row({{kOpen, 2}, {kDisconnect, 1}, {kSend, 1}}),
        row({{kSend, 3}, {kVisit, 2}, {kOpen, 2}}),
        row({{kVisit, 1}, {kOpen, 1}}),
        row({{kVisit, 1}, {kSend, 3}, {kDownload, 1}, {kOpen, 2}, {kUpload, 0.1}}),
        row({{kOpen, 3}, {kVisit, 2}}),
        row({{kSend, 2}, {kVisit, 2}}),
        row({{kVisit, 3}, {kOpen, 2}, {kSend, 1}}),
    };
    p.mean_length = 6.0;
    out.push_back(p);
  }
  {
    Profile p;
    p.name = "engineer";
    p.start_hour = hours({{8, 2}, {9, 4}, {10, 3}, {11, 1}});
    p.initial = row({{kOpen, 4}, {kVisit, 2}, {kConnect, 1}});
    p.transition = {
        row({{kCopy, 2}, {kOpen, 2}, {kDisconnect, 2}, {kWrite, 1}}),
        row({{kOpen, 3}, {kVisit, 2}}),
        row({{kWrite, 4}, {kCopy, 1}, {kVisit, 1}, {kOpen, 1}}),
        row({{kOpen, 2}, {kCopy, 0.5}, {kDisconnect, 2}, {kWrite, 1}}),
        row({{kOpen, 3}, {kSend, 1}, {kVisit, 1}, {kDelete, 0.3}}),
        row({{kOpen, 2}, {kVisit, 0.5}}),
        row({{kDownload, 2}, {kOpen, 2}, {kVisit, 1}, {kUpload, 0.3}}),
        row({{kOpen, 3}, {kVisit, 1}}),
        row({{kOpen, 1}, {kVisit, 1}}),
        row({{kOpen, 2}, {kVisit, 1}}),
    };
    p.mean_length = 7.0;
    out.push_back(p);
  }
  {
    Profile p;
    p.name = "it_admin";
    p.start_hour = hours({{6, 1}, {7, 3}, {8, 3}, {9, 1}});
    p.initial = row({{kConnect, 3}, {kVisit, 2}, {kOpen, 1}});
    p.transition = {
        row({{kCopy, 3}, {kDelete, 1}, {kDisconnect, 2}}),
        row({{kVisit, 2}, {kConnect, 1}, {kOpen, 1}, {kSend, 1}}),
        row({{kCopy, 2}, {kDelete, 1}, {kWrite, 1}}),
        row({{kCopy, 1}, {kDisconnect, 2}, {kDelete, 1}}),
        row({{kOpen, 1}, {kSend, 1}}),
        row({{kDisconnect, 1}, {kOpen, 1}, {kVisit, 1}}),
        row({{kDownload, 3}, {kVisit, 1}, {kUpload, 0.5}}),
        row({{kConnect, 1}, {kCopy, 1}, {kVisit, 1}}),
        row({{kVisit, 1}, {kSend, 1}}),
        row({{kVisit, 1}, {kConnect, 1}}),
    };
    p.mean_length = 6.0;
    p.night_shift = 0.08;
    out.push_back(p);
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct Event {
  std::int64_t time = 0;
  int type = 0;
  bool abnormal = false;
};

struct SessionPlan {
  std::size_t user = 0;
  std::size_t day = 0;
  std::vector<Event> events;  // logon first, logoff last
  bool injected = false;
};

// Per-user copy of a role profile with jittered weights.
struct Behavior {
  const Profile* profile = nullptr;
  std::vector<double> initial;
  std::vector<std::vector<double>> transition;
  int hour_shift = 0;
};

std::vector<double> jitter(const std::vector<double>& w, Rng& rng) {
  std::vector<double> out(w.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = w[i] > 0.0 ? w[i] * std::exp(0.4 * rng.normal()) : 0.0;
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace

const std::vector<std::string>& type_entries() {
  static const std::vector<std::string> entries = {
      "logon/Logon",     "logon/Logoff",      "device/Connect",    "device/Disconnect",
      "file/File Open",  "file/File Copy",    "file/File Write",   "file/File Delete",
      "http/WWW Visit",  "http/WWW Download", "http/WWW Upload",   "email/Send"};
  return entries;
}

const std::vector<Profile>& builtin_profiles() {
  static const std::vector<Profile> profiles = make_profiles();
  return profiles;
}

const Profile& builtin_profile(const std::string& name) {
  for (const auto& p : builtin_profiles())
    if (p.name == name) return p;
  throw InvalidConfig("unknown profile '" + name + "'");
}

void validate_profile(const Profile& p) {
  auto check = [&](auto first, auto last, const std::string& what) {
    double sum = 0.0;
    for (auto it = first; it != last; ++it) {
      if (!(*it >= 0.0)) throw InvalidConfig(p.name + ": negative weight in " + what);
      sum += *it;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw InvalidConfig(p.name + ": " + what + " sums to " + std::to_string(sum));
  };
  check(p.start_hour.begin(), p.start_hour.end(), "start_hour");
  if (p.initial.size() != kBodyCount || p.transition.size() != kBodyCount)
    throw InvalidConfig(p.name + ": profile must cover every activity type");
  check(p.initial.begin(), p.initial.end(), "initial");
  for (std::size_t i = 0; i < p.transition.size(); ++i) {
    if (p.transition[i].size() != kBodyCount)
      throw InvalidConfig(p.name + ": transition row has the wrong width");
    check(p.transition[i].begin(), p.transition[i].end(), "transition row " + std::to_string(i));
  }
  if (!(p.mean_length >= 1.0)) throw InvalidConfig(p.name + ": mean_length must be >= 1");
  if (!(p.night_shift >= 0.0 && p.night_shift <= 1.0))
    throw InvalidConfig(p.name + ": night_shift must lie in [0, 1]");
}

std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::off_hours: return "off_hours";
    case Pattern::device_exfiltration: return "device_exfiltration";
    case Pattern::rare_type: return "rare_type";
  }
  return "?";
}

Pattern parse_pattern(std::string_view name) {
  if (name == "off_hours") return Pattern::off_hours;
  if (name == "device_exfiltration") return Pattern::device_exfiltration;
  if (name == "rare_type") return Pattern::rare_type;
  throw InvalidConfig("unknown anomaly pattern '" + std::string(name) + "'");
}

void SynthConfig::set(const std::string& key, const std::string& v) {
  auto size = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const auto x = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
      throw InvalidConfig(key + ": expected an unsigned integer, got '" + s + "'");
    }
  };
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double x = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return x;
    } catch (const std::exception&) {
      throw InvalidConfig(key + ": expected a number, got '" + s + "'");
    }
  };
  if (key == "n_users") n_users = size(v);
  else if (key == "days") days = size(v);
  else if (key == "start_date") start_date = v;
  else if (key == "profiles") profiles = split_list(v);
  else if (key == "anomaly_rate") anomaly_rate = number(v);
  else if (key == "anomaly_patterns") {
    anomaly_patterns.clear();
    for (const auto& name : split_list(v)) anomaly_patterns.push_back(parse_pattern(name));
  } else if (key == "malicious_users") malicious_users = size(v);
  else if (key == "attendance") attendance = number(v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(size(v));
  else throw InvalidConfig("unknown synth config key '" + key + "'");
}

void SynthConfig::validate() const {
  if (n_users == 0) throw InvalidConfig("n_users must be positive");
  if (days == 0) throw InvalidConfig("days must be positive");
  if (!(anomaly_rate > 0.0 && anomaly_rate <= 0.05))
    throw InvalidConfig("anomaly_rate must lie in (0, 0.05]");
  if (profiles.empty()) throw InvalidConfig("at least one profile is required");
  for (const auto& name : profiles) validate_profile(builtin_profile(name));
  if (!anomaly_patterns.empty() && (malicious_users == 0 || malicious_users > n_users))
    throw InvalidConfig("malicious_users must lie in [1, n_users]");
  if (!(attendance > 0.0 && attendance <= 1.0)) throw InvalidConfig("attendance must lie in (0, 1]");
  (void)start_timestamp();
}

std::string SynthConfig::to_text() const {
  std::vector<std::string> patterns;
  for (auto p : anomaly_patterns) patterns.emplace_back(to_string(p));
  std::ostringstream out;
  out << std::setprecision(17);
  out << "anomaly_patterns = " << join(patterns) << '\n'
      << "anomaly_rate = " << anomaly_rate << '\n'
      << "attendance = " << attendance << '\n'
      << "days = " << days << '\n'
      << "malicious_users = " << malicious_users << '\n'
      << "n_users = " << n_users << '\n'
      << "profiles = " << join(profiles) << '\n'
      << "seed = " << seed << '\n'
      << "start_date = " << start_date << '\n';
  return out.str();
}

SynthConfig SynthConfig::load(const std::filesystem::path& path) {
  SynthConfig cfg;
  for (const auto& [k, v] : read_key_value_file(path)) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

std::int64_t SynthConfig::start_timestamp() const {
  try {
    return parse_timestamp(start_date + " 00:00:00");
  } catch (const InputError&) {
    throw InvalidConfig("start_date must be YYYY-MM-DD, got '" + start_date + "'");
  }
}

SplitConfig default_split(const SynthConfig& config) {
  const std::int64_t day = 86400;
  SplitConfig s;
  s.train_start = config.start_timestamp();
  s.test_start = s.train_start + static_cast<std::int64_t>((config.days * 2) / 3) * day;
  s.test_end = s.train_start + static_cast<std::int64_t>(config.days) * day;
  s.validation_fraction = 0.1;
  return s;
}

SynthStats generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  Rng rng(config.seed);
  const std::int64_t t0 = config.start_timestamp();
  const std::int64_t day_seconds = 86400;

  // Users and their behaviors.
  std::vector<Behavior> users(config.n_users);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    Behavior& b = users[u];
    b.profile = &builtin_profile(config.profiles[u % config.profiles.size()]);
    b.initial = jitter(b.profile->initial, rng);
    for (const auto& r : b.profile->transition) b.transition.push_back(jitter(r, rng));
    b.hour_shift = rng.range(-1, 1);
  }

  // Normal sessions. Timestamps increase strictly within a session and
  // repeated http activity in the same hour is skipped so ingest's http
  // dedup leaves normal counts untouched.
  std::vector<SessionPlan> sessions;
  for (std::size_t d = 0; d < config.days; ++d) {
    const std::int64_t day_start = t0 + static_cast<std::int64_t>(d) * day_seconds;
    const std::int64_t weekday = (day_start / day_seconds + 3) % 7;  // 0 = Monday
    const bool weekend = weekday >= 5;
    for (std::size_t u = 0; u < config.n_users; ++u) {
      const Behavior& b = users[u];
      const double p_work = weekend ? 0.03 : config.attendance;
      if (rng.uniform() >= p_work) continue;
      SessionPlan s;
      s.user = u;
      s.day = d;
      int hour;
      if (rng.uniform() < b.profile->night_shift)
        hour = rng.range(19, 21);
      else
        hour = std::clamp(static_cast<int>(rng.pick(b.profile->start_hour)) + b.hour_shift, 0, 22);
      std::int64_t t = day_start + hour * 3600 + rng.range(0, 59) * 60 + rng.range(0, 59);
      s.events.push_back({t, kLogonType, false});
      const int length = std::clamp(
          static_cast<int>(std::lround(b.profile->mean_length + 2.0 * rng.normal())), 2, 14);
      std::set<std::pair<std::int64_t, int>> http_seen;
      int cur = static_cast<int>(rng.pick(b.initial));
      for (int i = 0; i < length; ++i) {
        t += rng.range(5, 25) * 60 + rng.range(0, 59);
        const bool http = cur == kVisit || cur == kDownload || cur == kUpload;
        if (!http || http_seen.insert({t / 3600, cur}).second)
          s.events.push_back({t, kFirstBody + cur, false});
        cur = static_cast<int>(rng.pick(b.transition[static_cast<std::size_t>(cur)]));
      }
      t += rng.range(5, 25) * 60 + rng.range(0, 59);
      s.events.push_back({t, kLogoffType, false});
      sessions.push_back(std::move(s));
    }
  }

  SynthStats stats;
  for (const auto& s : sessions) stats.events += s.events.size();
  const std::size_t normal_events = stats.events;
  const auto budget = static_cast<std::size_t>(
      std::ceil(static_cast<double>(normal_events) * config.anomaly_rate));

  // Malicious users and anomaly injection.
  std::vector<std::size_t> all_users(config.n_users);
  std::iota(all_users.begin(), all_users.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < all_users.size(); ++i)
    std::swap(all_users[i], all_users[i + rng.below(all_users.size() - i)]);
  const std::vector<std::size_t> malicious(
      all_users.begin(),
      all_users.begin() + static_cast<std::ptrdiff_t>(
                              config.anomaly_patterns.empty() ? 0 : config.malicious_users));
  std::map<std::size_t, std::vector<std::size_t>> sessions_of;
  for (std::size_t i = 0; i < sessions.size(); ++i) sessions_of[sessions[i].user].push_back(i);
  std::set<std::pair<std::size_t, std::size_t>> night_used;

  std::size_t abnormal = 0;
  std::size_t attempts = 0;
  while (!config.anomaly_patterns.empty() && abnormal < budget && attempts < 100000) {
    ++attempts;
    const Pattern pattern = config.anomaly_patterns[rng.below(config.anomaly_patterns.size())];
    const std::size_t user = malicious[rng.below(malicious.size())];
    if (pattern == Pattern::off_hours) {
      const std::size_t day = rng.below(config.days);
      if (!night_used.insert({user, day}).second) continue;
      SessionPlan s;
      s.user = user;
      s.day = day;
      s.injected = true;
      const int hours_pool[] = {22, 23, 0, 1, 2, 3, 4};
      const int hour = hours_pool[rng.below(std::size(hours_pool))];
      // Early-morning hours belong to the next calendar day's small hours.
      const std::int64_t base = t0 + static_cast<std::int64_t>(day) * day_seconds +
                                (hour < 12 ? day_seconds : 0);
      if (base + day_seconds > t0 + static_cast<std::int64_t>(config.days) * day_seconds) continue;
      std::int64_t t = base + hour * 3600 + rng.range(0, 59) * 60;
      bool clash = false;
      for (std::size_t other : sessions_of[user]) {
        const auto& ev = sessions[other].events;
        if (ev.front().time < t + 4 * 3600 && ev.back().time > t - 3600) clash = true;
      }
      if (clash) continue;
      std::vector<int> body = {kConnect};
      for (int i = rng.range(2, 3); i > 0; --i) body.push_back(kCopy);
      if (rng.uniform() < 0.5) body.push_back(kUpload);
      body.push_back(kDisconnect);
      s.events.push_back({t, kLogonType, true});
      for (int b : body) {
        t += rng.range(1, 5) * 60 + rng.range(0, 59);
        s.events.push_back({t, kFirstBody + b, true});
      }
      t += rng.range(1, 5) * 60;
      s.events.push_back({t, kLogoffType, true});
      abnormal += s.events.size();
      sessions.push_back(std::move(s));
    } else {
      const auto& owned = sessions_of[user];
      if (owned.empty()) continue;
      SessionPlan& s = sessions[owned[rng.below(owned.size())]];
      if (s.injected || s.events.size() < 3) continue;
      std::vector<int> body;
      if (pattern == Pattern::device_exfiltration) {
        body.push_back(kConnect);
        for (int i = rng.range(2, 4); i > 0; --i) body.push_back(kCopy);
        body.push_back(kDisconnect);
      } else {
        body = {kUpload, kSend};
      }
      // Place the burst inside the gap after a random non-final event.
      const std::size_t at = 1 + rng.below(s.events.size() - 2);
      const std::int64_t lo = s.events[at - 1].time;
      const std::int64_t hi = s.events[at].time;
      const std::int64_t step = (hi - lo) / static_cast<std::int64_t>(body.size() + 1);
      if (step < 1) continue;
      std::vector<Event> burst;
      for (std::size_t i = 0; i < body.size(); ++i)
        burst.push_back({lo + step * static_cast<std::int64_t>(i + 1), kFirstBody + body[i], true});
      s.events.insert(s.events.begin() + static_cast<std::ptrdiff_t>(at), burst.begin(),
                      burst.end());
      s.injected = true;
      abnormal += burst.size();
    }
    ++stats.episodes;
  }
  stats.abnormal = abnormal;
  stats.events = normal_events + abnormal;
  stats.sessions = sessions.size();

  // Emit files. Sessions are ordered by start time then user so ids follow
  // the timeline.
  std::sort(sessions.begin(), sessions.end(), [](const SessionPlan& a, const SessionPlan& b) {
    if (a.events.front().time != b.events.front().time)
      return a.events.front().time < b.events.front().time;
    return a.user < b.user;
  });
  struct Line {
    std::int64_t time;
    std::size_t seq;
    std::string text;
  };
  std::array<std::vector<Line>, 5> lines;
  std::vector<std::string> answers;
  std::array<std::size_t, 5> counters{};
  const char prefix[5] = {'L', 'D', 'F', 'H', 'E'};
  const auto& entries = type_entries();
  std::size_t seq = 0;
  for (const auto& s : sessions) {
    char user_id[16], pc[16];
    std::snprintf(user_id, sizeof user_id, "U%04zu", s.user + 1);
    std::snprintf(pc, sizeof pc, "PC-%04zu", s.user + 1);
    for (const auto& e : s.events) {
      const std::string& entry = entries[static_cast<std::size_t>(e.type)];
      const auto slash = entry.find('/');
      const Source source = parse_source(entry.substr(0, slash));
      const auto si = static_cast<std::size_t>(source);
      char id[32];
      std::snprintf(id, sizeof id, "%c%08zu", prefix[si], ++counters[si]);
      std::string text = std::string(id) + "," + format_timestamp(e.time) + "," + user_id + "," +
                         pc + "," + entry.substr(slash + 1);
      lines[si].push_back({e.time, seq++, std::move(text)});
      if (e.abnormal) answers.push_back(std::string(source_name(source)) + "," + id);
    }
  }

  std::filesystem::create_directories(out_dir);
  for (Source source : kAllSources) {
    auto& ls = lines[static_cast<std::size_t>(source)];
    std::stable_sort(ls.begin(), ls.end(), [](const Line& a, const Line& b) {
      return a.time != b.time ? a.time < b.time : a.seq < b.seq;
    });
    std::ofstream out(out_dir / (std::string(source_name(source)) + ".csv"));
    if (!out) throw InputError("cannot write into " + out_dir.string());
    out << "id,date,user,pc,activity\n";
    for (const auto& l : ls) out << l.text << '\n';
  }
  {
    std::ofstream out(out_dir / "answers.csv");
    for (const auto& a : answers) out << a << '\n';
  }
  ActivityTypeTable(entries).save(out_dir / "types.txt");
  {
    std::ofstream out(out_dir / "synth.conf");
    out << config.to_text();
  }
  return stats;
}

}  // namespace lan::synth
