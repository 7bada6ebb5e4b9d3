#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lan/common.hpp"

namespace lan {

enum class Source : std::uint8_t { logon, device, file, http, email };

inline constexpr std::array<Source, 5> kAllSources = {
    Source::logon, Source::device, Source::file, Source::http, Source::email};

std::string_view source_name(Source s);
Source parse_source(std::string_view name);

inline constexpr int kHoursPerDay = 24;

// Dense mapping of "source/action" names to consecutive type ids. Loaded from
// a text file with one entry per line; the line number (ignoring blank and
// '#' lines) is the type id.
class ActivityTypeTable {
 public:
  ActivityTypeTable() = default;
  explicit ActivityTypeTable(std::vector<std::string> entries);

  static ActivityTypeTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int id(Source source, std::string_view action) const;
  std::optional<int> find(std::string_view entry) const;
  const std::string& name(int type_id) const { return entries_.at(type_id); }
  Source source_of(int type_id) const { return sources_.at(type_id); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }

  // Vocabulary size M; post-hoc vocabularies reserve one extra mask code M-1.
  std::size_t vocab_size(bool with_mask) const {
    return entries_.size() * kHoursPerDay + (with_mask ? 1 : 0);
  }

  int logon_type() const { return logon_; }
  int logoff_type() const { return logoff_; }

  // FNV-1a over the canonical entry list; embedded in checkpoints.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> entries_;
  std::vector<Source> sources_;
  std::unordered_map<std::string, int> index_;
  int logon_ = -1;
  int logoff_ = -1;
};

struct ActivityEvent {
  std::string id;
  std::string user_id;
  std::int64_t timestamp = 0;  // naive local time as epoch seconds
  int type_id = 0;
  Source source = Source::logon;
  bool is_abnormal = false;
};

// Column positions for one source file, derived from its header line.
struct CsvSchema {
  std::size_t n_fields = 5;
  int id = 0;
  int date = 1;
  int user = 2;
  int pc = 3;
  int activity = 4;  // -1 when the source has no action column
};

CsvSchema default_schema(Source source);
CsvSchema schema_from_header(std::string_view header, Source source);

// Action assigned to records of sources that carry no action column.
std::string_view default_action(Source source);

// Splits one comma-separated line. Fields may be double-quoted; quotes inside
// quoted fields are escaped by doubling.
std::vector<std::string> split_csv_line(std::string_view line);

// Accepts "MM/DD/YYYY HH:MM:SS", "YYYY-MM-DD HH:MM:SS" and
// "YYYY-MM-DDTHH:MM:SS". Throws MalformedRecord.
std::int64_t parse_timestamp(std::string_view text);
// "MM/DD/YYYY HH:MM:SS", the layout of the raw log files.
std::string format_timestamp(std::int64_t ts);
std::int64_t days_from_civil(int year, unsigned month, unsigned day);

ActivityEvent parse_event_record(std::string_view raw_record, Source source,
                                 const ActivityTypeTable& table);
ActivityEvent parse_event_record(std::string_view raw_record, Source source,
                                 const CsvSchema& schema,
                                 const ActivityTypeTable& table);

// code = type_id * 24 + hour
constexpr Code encode_activity(int type_id, int hour) {
  return static_cast<Code>(type_id * kHoursPerDay + hour);
}
constexpr std::pair<int, int> decode_activity(Code code) {
  return {code / kHoursPerDay, code % kHoursPerDay};
}
int hour_of(std::int64_t timestamp, int tz_offset_hours = 0);
Code encode_activity(const ActivityEvent& event, int tz_offset_hours = 0);

struct Session {
  std::string user_id;
  std::vector<Code> codes;
  std::vector<std::uint8_t> labels;
  std::vector<std::int64_t> timestamps;
  std::vector<Source> sources;
  bool degenerate = false;  // orphan events before the user's first logon

  std::size_t size() const { return codes.size(); }
  std::int64_t start_time() const { return timestamps.front(); }
};

struct SessionizeOptions {
  int tz_offset_hours = 0;
};

// events: one user's stream, sorted by timestamp.
std::vector<Session> sessionize(const std::vector<ActivityEvent>& events,
                                const ActivityTypeTable& table,
                                const SessionizeOptions& options = {});

// Keeps the first of any run of identical http codes in the same calendar
// hour. Non-http and abnormal activities are always kept.
Session dedup_http(const Session& session);

struct SplitConfig {
  std::int64_t train_start = 0;  // inclusive
  std::int64_t test_start = 0;   // train/validation end, test begins
  std::int64_t test_end = 0;     // exclusive
  double validation_fraction = 0.1;

  static SplitConfig cert_default();
};

struct DatasetSplit {
  std::vector<Session> train;
  std::vector<Session> validation;
  std::vector<Session> test;
  std::size_t train_normal = 0;
  std::size_t train_abnormal = 0;
  std::size_t dropped_sessions = 0;  // straddling a boundary or out of range

  // N_normal / N_abnormal over training activities; empty without anomalies.
  std::optional<double> imbalance_ratio() const;
};

DatasetSplit split_by_time(std::vector<Session> sessions,
                           const SplitConfig& config);

// One prediction target: the encoder reads `codes`, pools with the hidden
// state at `query_pos` and predicts `target`.
struct Instance {
  std::vector<Code> codes;
  std::size_t query_pos = 0;
  Code target = 0;
  std::uint8_t label = 0;
  std::size_t session = 0;   // index into the owning session list
  std::size_t position = 0;  // 1-based position of the target in its session
  std::int64_t timestamp = 0;
};

inline constexpr std::size_t kDefaultMaxLen = 256;

// Real-time instances: for i = 2..l, the most recent max_len activities
// before position i predict activity i.
std::vector<Instance> make_rt_subsequences(const Session& session,
                                           std::size_t max_len = kDefaultMaxLen,
                                           std::size_t session_index = 0);

// Post-hoc instances: one per position t with codes[t] replaced by the mask
// code. Sessions longer than max_len are windowed around t.
std::vector<Instance> make_ph_instances(const Session& session, Code mask_code,
                                        std::size_t max_len = kDefaultMaxLen,
                                        std::size_t session_index = 0);

struct GroundTruth {
  std::vector<std::string> ids;
  static GroundTruth load(const std::filesystem::path& path);
};

struct IngestOptions {
  int tz_offset_hours = 0;
  bool dedup_http = true;
};

struct IngestResult {
  std::vector<Session> sessions;
  std::size_t events = 0;
  std::size_t abnormal_events = 0;
  std::size_t degenerate_sessions = 0;
};

// Reads <source>.csv files from `log_dir` (missing sources are skipped),
// labels events listed in the ground truth, groups by user, sessionizes and
// optionally deduplicates http activity.
IngestResult ingest_directory(const std::filesystem::path& log_dir,
                              const ActivityTypeTable& table,
                              const GroundTruth& truth,
                              const IngestOptions& options = {});

// Columnar instance files: user_id,session_id,position,code,label,timestamp
void write_session_file(const std::filesystem::path& path,
                        const std::vector<Session>& sessions,
                        std::size_t first_session_id = 0);
std::vector<Session> read_session_file(const std::filesystem::path& path);

}  // namespace lan
