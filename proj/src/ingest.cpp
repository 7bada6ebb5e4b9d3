#include "lan/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace lan {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' ||
                        s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string_view source_name(Source s) {
  switch (s) {
    case Source::logon: return "logon";
    case Source::device: return "device";
    case Source::file: return "file";
    case Source::http: return "http";
    case Source::email: return "email";
  }
  return "?";
}

Source parse_source(std::string_view name) {
  const std::string n = lower(trim(name));
  for (Source s : kAllSources)
    if (source_name(s) == n) return s;
  throw InputError("unknown log source '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// ActivityTypeTable

ActivityTypeTable::ActivityTypeTable(std::vector<std::string> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const std::string& e = entries_[i];
    const auto slash = e.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == e.size())
      throw InvalidConfig("activity type entry '" + e + "' is not of the form source/action");
    sources_.push_back(parse_source(std::string_view(e).substr(0, slash)));
    if (!index_.emplace(e, static_cast<int>(i)).second)
      throw InvalidConfig("duplicate activity type entry '" + e + "'");
  }
  if (auto id = find("logon/Logon")) logon_ = *id;
  if (auto id = find("logon/Logoff")) logoff_ = *id;
  if (logon_ < 0)
    throw InvalidConfig("activity type table must contain 'logon/Logon'");
}

ActivityTypeTable ActivityTypeTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open activity type table " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    entries.emplace_back(t);
  }
  if (entries.empty()) throw InvalidConfig("activity type table " + path.string() + " is empty");
  return ActivityTypeTable(std::move(entries));
}

void ActivityTypeTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& e : entries_) out << e << '\n';
}

int ActivityTypeTable::id(Source source, std::string_view action) const {
  std::string key(source_name(source));
  key += '/';
  key += trim(action);
  auto it = index_.find(key);
  if (it == index_.end()) throw UnknownActivityType("unknown activity type '" + key + "'");
  return it->second;
}

std::optional<int> ActivityTypeTable::find(std::string_view entry) const {
  auto it = index_.find(std::string(entry));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t ActivityTypeTable::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& e : entries_) {
    h = fnv1a(e, h);
    h = fnv1a("\n", h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Record parsing

CsvSchema default_schema(Source source) {
  CsvSchema s;
  if (source != Source::logon && source != Source::device) s.activity = -1;
  return s;
}

std::string_view default_action(Source source) {
  switch (source) {
    case Source::file: return "File Open";
    case Source::http: return "WWW Visit";
    case Source::email: return "Send";
    default: return "";
  }
}

CsvSchema schema_from_header(std::string_view header, Source source) {
  const auto cols = split_csv_line(header);
  CsvSchema s;
  s.n_fields = cols.size();
  s.id = s.date = s.user = s.pc = s.activity = -1;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const std::string c = lower(trim(cols[i]));
    const int idx = static_cast<int>(i);
    if (c == "id") s.id = idx;
    else if (c == "date") s.date = idx;
    else if (c == "user") s.user = idx;
    else if (c == "pc") s.pc = idx;
    else if (c == "activity") s.activity = idx;
  }
  if (s.id < 0 || s.date < 0 || s.user < 0 || s.pc < 0)
    throw MalformedRecord("header of " + std::string(source_name(source)) +
                          " file lacks one of id,date,user,pc");
  if (s.activity < 0 && default_action(source).empty())
    throw MalformedRecord("header of " + std::string(source_name(source)) +
                          " file lacks an activity column");
  return s;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r' && c != '\n') {
      cur += c;
    }
  }
  if (quoted) throw MalformedRecord("unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::int64_t parse_timestamp(std::string_view text) {
  const auto t = trim(text);
  int year = 0, month = 0, day = 0, hh = 0, mm = 0, ss = 0;
  auto bad = [&]() -> MalformedRecord {
    return MalformedRecord("bad timestamp '" + std::string(t) + "'");
  };
  if (t.size() != 19) throw bad();
  std::string_view date_part;
  if (t[2] == '/' && t[5] == '/') {
    if (!parse_int(t.substr(0, 2), month) || !parse_int(t.substr(3, 2), day) ||
        !parse_int(t.substr(6, 4), year))
      throw bad();
  } else if (t[4] == '-' && t[7] == '-') {
    if (!parse_int(t.substr(0, 4), year) || !parse_int(t.substr(5, 2), month) ||
        !parse_int(t.substr(8, 2), day))
      throw bad();
  } else {
    throw bad();
  }
  if (t[10] != ' ' && t[10] != 'T') throw bad();
  if (t[13] != ':' || t[16] != ':') throw bad();
  if (!parse_int(t.substr(11, 2), hh) || !parse_int(t.substr(14, 2), mm) ||
      !parse_int(t.substr(17, 2), ss))
    throw bad();
  if (month < 1 || month > 12 || day < 1 || day > 31 || hh > 23 || mm > 59 || ss > 60)
    throw bad();
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) *
             86400 +
         hh * 3600 + mm * 60 + ss;
}

std::string format_timestamp(std::int64_t ts) {
  std::int64_t days = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
  std::int64_t secs = ts - days * 86400;
  // civil_from_days
  days += 719468;
  const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(days - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y0 = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = y0 + (m <= 2);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%02u/%02u/%04lld %02lld:%02lld:%02lld", m, d,
                static_cast<long long>(y), static_cast<long long>(secs / 3600),
                static_cast<long long>((secs / 60) % 60), static_cast<long long>(secs % 60));
  return buf;
}

ActivityEvent parse_event_record(std::string_view raw_record, Source source,
                                 const ActivityTypeTable& table) {
  return parse_event_record(raw_record, source, default_schema(source), table);
}

ActivityEvent parse_event_record(std::string_view raw_record, Source source,
                                 const CsvSchema& schema, const ActivityTypeTable& table) {
  const auto fields = split_csv_line(raw_record);
  if (fields.size() != schema.n_fields)
    throw MalformedRecord("expected " + std::to_string(schema.n_fields) + " fields, got " +
                          std::to_string(fields.size()) + " in " +
                          std::string(source_name(source)) + " record");
  ActivityEvent ev;
  ev.id = std::string(trim(fields[schema.id]));
  ev.user_id = std::string(trim(fields[schema.user]));
  if (ev.id.empty() || ev.user_id.empty()) throw MalformedRecord("empty id or user field");
  ev.timestamp = parse_timestamp(fields[schema.date]);
  ev.source = source;
  const std::string_view action =
      schema.activity >= 0 ? std::string_view(fields[schema.activity]) : default_action(source);
  ev.type_id = table.id(source, action);
  return ev;
}

int hour_of(std::int64_t timestamp, int tz_offset_hours) {
  std::int64_t local = timestamp + static_cast<std::int64_t>(tz_offset_hours) * 3600;
  std::int64_t s = local % 86400;
  if (s < 0) s += 86400;
  return static_cast<int>(s / 3600);
}

Code encode_activity(const ActivityEvent& event, int tz_offset_hours) {
  return encode_activity(event.type_id, hour_of(event.timestamp, tz_offset_hours));
}

// ---------------------------------------------------------------------------
// Sessions

std::vector<Session> sessionize(const std::vector<ActivityEvent>& events,
                                const ActivityTypeTable& table,
                                const SessionizeOptions& options) {
  std::vector<Session> sessions;
  Session* cur = nullptr;
  bool closed = true;
  for (const auto& ev : events) {
    const bool is_logon = ev.type_id == table.logon_type();
    if (is_logon || cur == nullptr || closed) {
      sessions.emplace_back();
      cur = &sessions.back();
      cur->user_id = ev.user_id;
      // Orphans (before the first logon or after a logoff) keep their own
      // flagged session so no event is lost.
      cur->degenerate = !is_logon;
      closed = false;
    }
    cur->codes.push_back(encode_activity(ev, options.tz_offset_hours));
    cur->labels.push_back(ev.is_abnormal ? 1 : 0);
    cur->timestamps.push_back(ev.timestamp);
    cur->sources.push_back(ev.source);
    if (ev.type_id == table.logoff_type()) closed = true;
  }
  return sessions;
}

Session dedup_http(const Session& session) {
  Session out;
  out.user_id = session.user_id;
  out.degenerate = session.degenerate;
  // (code, hour bucket) pairs already retained among normal http events
  std::unordered_set<std::int64_t> seen;
  for (std::size_t i = 0; i < session.size(); ++i) {
    const bool http = !session.sources.empty() && session.sources[i] == Source::http;
    if (http && session.labels[i] == 0) {
      std::int64_t ts = session.timestamps[i];
      std::int64_t bucket = (ts >= 0 ? ts / 3600 : (ts - 3599) / 3600);
      const std::int64_t key = bucket * 1000003 + session.codes[i];
      if (!seen.insert(key).second) continue;
    }
    out.codes.push_back(session.codes[i]);
    out.labels.push_back(session.labels[i]);
    out.timestamps.push_back(session.timestamps[i]);
    if (!session.sources.empty()) out.sources.push_back(session.sources[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal split

SplitConfig SplitConfig::cert_default() {
  SplitConfig c;
  c.train_start = days_from_civil(2010, 1, 1) * 86400;
  c.test_start = days_from_civil(2011, 1, 1) * 86400;
  c.test_end = days_from_civil(2011, 7, 1) * 86400;
  return c;
}

std::optional<double> DatasetSplit::imbalance_ratio() const {
  if (train_abnormal == 0) return std::nullopt;
  return static_cast<double>(train_normal) / static_cast<double>(train_abnormal);
}

DatasetSplit split_by_time(std::vector<Session> sessions, const SplitConfig& config) {
  if (!(config.train_start < config.test_start && config.test_start < config.test_end))
    throw InvalidConfig("split boundaries must satisfy train_start < test_start < test_end");
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0))
    throw InvalidConfig("validation_fraction must be in [0, 1)");
  const double span = static_cast<double>(config.test_start - config.train_start);
  const auto val_start =
      config.test_start - static_cast<std::int64_t>(std::llround(span * config.validation_fraction));

  DatasetSplit split;
  for (auto& s : sessions) {
    if (s.size() == 0) continue;
    const auto start = s.start_time();
    const auto end = s.timestamps.back();
    if (start >= config.train_start && start < config.test_start) {
      if (end >= config.test_start) {
        ++split.dropped_sessions;
        continue;
      }
      if (start >= val_start) {
        split.validation.push_back(std::move(s));
      } else {
        for (auto l : s.labels) (l ? split.train_abnormal : split.train_normal)++;
        split.train.push_back(std::move(s));
      }
    } else if (start >= config.test_start && start < config.test_end) {
      split.test.push_back(std::move(s));
    } else {
      ++split.dropped_sessions;
    }
  }
  if (split.train.empty()) throw EmptySplit("training split is empty");
  if (split.validation.empty()) throw EmptySplit("validation split is empty");
  if (split.test.empty()) throw EmptySplit("test split is empty");
  return split;
}

// ---------------------------------------------------------------------------
// Instances

std::vector<Instance> make_rt_subsequences(const Session& session, std::size_t max_len,
                                           std::size_t session_index) {
  if (max_len == 0) throw InvalidConfig("max_len must be positive");
  std::vector<Instance> out;
  if (session.size() < 2) return out;
  out.reserve(session.size() - 1);
  for (std::size_t i = 1; i < session.size(); ++i) {
    Instance inst;
    const std::size_t begin = i > max_len ? i - max_len : 0;
    inst.codes.assign(session.codes.begin() + static_cast<std::ptrdiff_t>(begin),
                      session.codes.begin() + static_cast<std::ptrdiff_t>(i));
    inst.query_pos = inst.codes.size() - 1;
    inst.target = session.codes[i];
    inst.label = session.labels[i];
    inst.session = session_index;
    inst.position = i + 1;
    inst.timestamp = session.timestamps[i];
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> make_ph_instances(const Session& session, Code mask_code,
                                        std::size_t max_len, std::size_t session_index) {
  if (max_len == 0) throw InvalidConfig("max_len must be positive");
  std::vector<Instance> out;
  const std::size_t l = session.size();
  out.reserve(l);
  for (std::size_t t = 0; t < l; ++t) {
    std::size_t begin = 0;
    std::size_t end = l;
    if (l > max_len) {
      const std::size_t half = max_len / 2;
      begin = t > half ? t - half : 0;
      begin = std::min(begin, l - max_len);
      end = begin + max_len;
    }
    Instance inst;
    inst.codes.assign(session.codes.begin() + static_cast<std::ptrdiff_t>(begin),
                      session.codes.begin() + static_cast<std::ptrdiff_t>(end));
    inst.query_pos = t - begin;
    inst.codes[inst.query_pos] = mask_code;
    inst.target = session.codes[t];
    inst.label = session.labels[t];
    inst.session = session_index;
    inst.position = t + 1;
    inst.timestamp = session.timestamps[t];
    out.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

GroundTruth GroundTruth::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open ground truth file " + path.string());
  GroundTruth gt;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.find(',') == std::string_view::npos) {
      gt.ids.emplace_back(t);
      continue;
    }
    auto fields = split_csv_line(t);
    bool first_is_source = false;
    for (Source s : kAllSources)
      if (lower(trim(fields[0])) == source_name(s)) first_is_source = true;
    if (first_is_source && fields.size() > 1)
      gt.ids.emplace_back(trim(fields[1]));
    else
      gt.ids.emplace_back(trim(fields[0]));
  }
  return gt;
}

IngestResult ingest_directory(const std::filesystem::path& log_dir,
                              const ActivityTypeTable& table, const GroundTruth& truth,
                              const IngestOptions& options) {
  if (!std::filesystem::is_directory(log_dir))
    throw InputError("log directory " + log_dir.string() + " does not exist");
  const std::unordered_set<std::string> abnormal(truth.ids.begin(), truth.ids.end());

  struct Keyed {
    ActivityEvent ev;
    int rank;
    std::size_t order;
  };
  std::map<std::string, std::vector<Keyed>> by_user;
  IngestResult result;
  std::size_t order = 0;
  bool any_file = false;
  for (Source source : kAllSources) {
    const auto path = log_dir / (std::string(source_name(source)) + ".csv");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    any_file = true;
    std::string line;
    if (!std::getline(in, line)) continue;
    const CsvSchema schema = schema_from_header(line, source);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      ActivityEvent ev;
      try {
        ev = parse_event_record(line, source, schema, table);
      } catch (const InputError& e) {
        throw MalformedRecord(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      ev.is_abnormal = abnormal.count(ev.id) > 0;
      result.abnormal_events += ev.is_abnormal;
      ++result.events;
      const int rank = ev.type_id == table.logon_type()    ? 0
                       : ev.type_id == table.logoff_type() ? 2
                                                           : 1;
      auto& stream = by_user[ev.user_id];
      stream.push_back({std::move(ev), rank, order++});
    }
  }
  if (!any_file) throw InputError("no <source>.csv files found in " + log_dir.string());

  for (auto& [user, stream] : by_user) {
    std::stable_sort(stream.begin(), stream.end(), [](const Keyed& a, const Keyed& b) {
      if (a.ev.timestamp != b.ev.timestamp) return a.ev.timestamp < b.ev.timestamp;
      if (a.rank != b.rank) return a.rank < b.rank;
      return a.order < b.order;
    });
    std::vector<ActivityEvent> events;
    events.reserve(stream.size());
    for (auto& k : stream) events.push_back(std::move(k.ev));
    auto sessions = sessionize(events, table, {options.tz_offset_hours});
    for (auto& s : sessions) {
      result.degenerate_sessions += s.degenerate;
      result.sessions.push_back(options.dedup_http ? dedup_http(s) : std::move(s));
    }
  }
  return result;
}

void write_session_file(const std::filesystem::path& path, const std::vector<Session>& sessions,
                        std::size_t first_session_id) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "user_id,session_id,position,code,label,timestamp\n";
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const auto& ses = sessions[s];
    for (std::size_t i = 0; i < ses.size(); ++i) {
      out << ses.user_id << ',' << (first_session_id + s) << ',' << (i + 1) << ','
          << ses.codes[i] << ',' << static_cast<int>(ses.labels[i]) << ','
          << ses.timestamps[i] << '\n';
    }
  }
}

std::vector<Session> read_session_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != "user_id,session_id,position,code,label,timestamp")
    throw MalformedRecord(path.string() + ": unexpected header");
  std::vector<Session> sessions;
  std::string last_key;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    std::size_t position = 0;
    Code code = 0;
    int label = 0;
    std::int64_t ts = 0;
    if (f.size() != 6 || !parse_int(std::string_view(f[2]), position) ||
        !parse_int(std::string_view(f[3]), code) || !parse_int(std::string_view(f[4]), label) ||
        !parse_int(std::string_view(f[5]), ts) || (label != 0 && label != 1) || code < 0)
      throw MalformedRecord(path.string() + ":" + std::to_string(line_no) + ": bad row");
    const std::string key = f[0] + '\x1f' + f[1];
    if (key != last_key) {
      if (position != 1)
        throw MalformedRecord(path.string() + ":" + std::to_string(line_no) +
                              ": session does not start at position 1");
      sessions.emplace_back();
      sessions.back().user_id = f[0];
      last_key = key;
    } else if (position != sessions.back().size() + 1) {
      throw MalformedRecord(path.string() + ":" + std::to_string(line_no) +
                            ": positions out of order");
    }
    auto& s = sessions.back();
    s.codes.push_back(code);
    s.labels.push_back(static_cast<std::uint8_t>(label));
    s.timestamps.push_back(ts);
  }
  return sessions;
}

}  // namespace lan
