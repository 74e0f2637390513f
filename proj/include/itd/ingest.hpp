#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "itd/common.hpp"

namespace itd::ingest {

enum class LogKind { kLogon, kDevice, kFile, kEmail, kHttp };

const char* to_string(LogKind kind);
inline constexpr LogKind kAllKinds[] = {LogKind::kLogon, LogKind::kDevice,
                                        LogKind::kFile, LogKind::kEmail,
                                        LogKind::kHttp};

// One parsed log row, normalized to a common envelope. Schema-specific
// columns land in `payload` keyed by their logical names.
struct RawEvent {
  std::string id;
  CivilTime ts;
  std::string user;
  std::string pc;
  LogKind kind = LogKind::kLogon;
  std::map<std::string, std::string> payload;
  bool malicious = false;
};

struct RowError {
  std::string file;
  long line = 0;
  std::string reason;
};

struct ParseResult {
  std::vector<RawEvent> events;
  std::vector<RowError> errors;
};

// logical field name -> column header in the file. Logical names are fixed;
// headers vary between dataset releases.
using ColumnMap = std::map<std::string, std::string>;

// Identity mapping over the canonical headers for `kind`.
ColumnMap default_column_map(LogKind kind);
// Logical payload fields that must be mapped for `kind`. The HTTP `activity`
// verb is optional: releases without it default every row to "visit".
std::vector<std::string> required_fields(LogKind kind);
std::vector<std::string> optional_fields(LogKind kind);

// Streams `path`, emitting one RawEvent per data row in file order. Rows that
// fail to parse are quarantined into `errors` rather than aborting; a missing
// required column is a ConfigError naming the column.
ParseResult parse_log_file(const std::string& path, LogKind kind,
                           const ColumnMap& columns,
                           std::string_view ts_format = kCertTimestampFormat);

struct TruthWindow {
  std::string user;
  CivilTime start;
  CivilTime end;
};

struct GroundTruth {
  enum class Mode { kIds, kWindows };
  Mode mode = Mode::kIds;
  std::set<std::string> ids;
  std::vector<TruthWindow> windows;
};

// ids mode: comma-separated event ids, any number per line.
// windows mode: `user,start_iso8601,end_iso8601` per line; start must not be
// after end. Window membership is half-open [start, end).
GroundTruth load_ground_truth(const std::string& path, GroundTruth::Mode mode);

std::vector<RawEvent> label_events(std::vector<RawEvent> events,
                                   const GroundTruth& truth);

void write_error_report(const std::string& path,
                        const std::vector<RowError>& errors);

// ---------------------------------------------------------------------------
// Synthetic dataset generation: seeded CERT-shaped logs for desk-scale runs.
// ---------------------------------------------------------------------------
enum class AnomalySignature { kAfterHoursDevice, kFlagUrlHttp, kMassEmailOut };

const char* to_string(AnomalySignature s);
AnomalySignature signature_from_string(const std::string& name);

struct SyntheticConfig {
  int n_users = 8;
  int days = 30;
  std::uint64_t seed = 42;
  double anomaly_rate = 0.0;
  AnomalySignature anomaly_signature = AnomalySignature::kAfterHoursDevice;
  double events_per_user_day = 15.0;
  std::string org_domain = "dtaa.com";
  // First calendar day of the run; defaults to a Monday.
  CivilTime start_date{2010, 1, 4, 0, 0, 0};
};

struct SyntheticOutput {
  std::map<std::string, std::string> files;  // label -> path
  long total_events = 0;
  long malicious_events = 0;
};

// Writes logon.csv, device.csv, file.csv, email.csv, http.csv, truth.csv and
// context.csv (user,assigned_pc,supervisor_pc) under `out_dir`. Byte-identical
// output for identical config.
SyntheticOutput generate_synthetic(const SyntheticConfig& config,
                                   const std::string& out_dir);

}  // namespace itd::ingest
