#include "itd/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "itd/csv.hpp"

namespace itd::ingest {

const char* to_string(LogKind kind) {
  switch (kind) {
    case LogKind::kLogon: return "logon";
    case LogKind::kDevice: return "device";
    case LogKind::kFile: return "file";
    case LogKind::kEmail: return "email";
    case LogKind::kHttp: return "http";
  }
  return "?";
}

std::vector<std::string> required_fields(LogKind kind) {
  switch (kind) {
    case LogKind::kLogon:
    case LogKind::kDevice:
      return {"activity"};
    case LogKind::kFile:
      return {"filename", "activity", "to_removable_media",
              "from_removable_media", "content"};
    case LogKind::kEmail:
      return {"to", "cc", "bcc", "from", "size", "attachments", "content"};
    case LogKind::kHttp:
      return {"url", "content"};
  }
  return {};
}

std::vector<std::string> optional_fields(LogKind kind) {
  if (kind == LogKind::kHttp) return {"activity"};
  return {};
}

ColumnMap default_column_map(LogKind kind) {
  ColumnMap m;
  for (const char* f : {"id", "date", "user", "pc"}) m[f] = f;
  for (const auto& f : required_fields(kind)) m[f] = f;
  for (const auto& f : optional_fields(kind)) m[f] = f;
  return m;
}

ParseResult parse_log_file(const std::string& path, LogKind kind,
                           const ColumnMap& columns,
                           std::string_view ts_format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open log file: " + path);
  CsvReader reader(in);

  std::vector<std::string> header;
  if (!reader.next(header)) return {};  // empty file: no rows, no errors

  auto column_index = [&](const std::string& logical, bool required) {
    auto it = columns.find(logical);
    std::string name = it != columns.end() ? it->second : logical;
    auto pos = std::find(header.begin(), header.end(), name);
    if (pos == header.end()) {
      if (required)
        throw ConfigError(path + ": missing required column '" + name +
                          "' (field '" + logical + "')");
      return -1L;
    }
    return static_cast<long>(pos - header.begin());
  };

  struct Field {
    std::string logical;
    long index;
  };
  long idx_id = column_index("id", true);
  long idx_date = column_index("date", true);
  long idx_user = column_index("user", true);
  long idx_pc = column_index("pc", true);
  std::vector<Field> payload_fields;
  for (const auto& f : required_fields(kind))
    payload_fields.push_back({f, column_index(f, true)});
  for (const auto& f : optional_fields(kind))
    payload_fields.push_back({f, column_index(f, false)});

  ParseResult result;
  std::vector<std::string> row;
  while (reader.next(row)) {
    long line = reader.record_line();
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    auto cell = [&](long idx) -> const std::string* {
      if (idx < 0 || idx >= static_cast<long>(row.size())) return nullptr;
      return &row[static_cast<std::size_t>(idx)];
    };
    const std::string* date = cell(idx_date);
    const std::string* id = cell(idx_id);
    const std::string* user = cell(idx_user);
    const std::string* pc = cell(idx_pc);
    if (!id || !date || !user || !pc) {
      result.errors.push_back(
          {path, line,
           "row has " + std::to_string(row.size()) + " fields, expected " +
               std::to_string(header.size())});
      continue;
    }
    RawEvent ev;
    if (!parse_civil(*date, ts_format, ev.ts)) {
      result.errors.push_back({path, line, "unparseable timestamp '" + *date + "'"});
      continue;
    }
    if (user->empty() || pc->empty()) {
      result.errors.push_back({path, line, user->empty() ? "empty user" : "empty pc"});
      continue;
    }
    ev.id = *id;
    ev.user = *user;
    ev.pc = *pc;
    ev.kind = kind;
    bool ok = true;
    for (const auto& f : payload_fields) {
      const std::string* v = cell(f.index);
      if (v) {
        ev.payload[f.logical] = *v;
      } else if (f.index >= 0) {
        result.errors.push_back(
            {path, line,
             "row has " + std::to_string(row.size()) + " fields, expected " +
                 std::to_string(header.size())});
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    if (kind == LogKind::kHttp && !ev.payload.count("activity"))
      ev.payload["activity"] = "visit";
    result.events.push_back(std::move(ev));
  }
  return result;
}

GroundTruth load_ground_truth(const std::string& path, GroundTruth::Mode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open ground truth file: " + path);
  CsvReader reader(in);
  GroundTruth truth;
  truth.mode = mode;
  std::vector<std::string> row;
  while (reader.next(row)) {
    long line = reader.record_line();
    bool blank = true;
    for (const auto& f : row)
      if (!trim(f).empty()) blank = false;
    if (blank) continue;
    if (mode == GroundTruth::Mode::kIds) {
      for (const auto& f : row) {
        std::string id = trim(f);
        if (!id.empty()) truth.ids.insert(id);
      }
    } else {
      if (row.size() != 3)
        throw DataError(path + ":" + std::to_string(line) +
                        ": expected user,start,end");
      TruthWindow w;
      w.user = trim(row[0]);
      if (!parse_iso8601(trim(row[1]), w.start))
        throw DataError(path + ":" + std::to_string(line) +
                        ": bad start timestamp '" + row[1] + "'");
      if (!parse_iso8601(trim(row[2]), w.end))
        throw DataError(path + ":" + std::to_string(line) +
                        ": bad end timestamp '" + row[2] + "'");
      if (civil_less(w.end, w.start))
        throw DataError(path + ":" + std::to_string(line) +
                        ": window end precedes start");
      truth.windows.push_back(std::move(w));
    }
  }
  return truth;
}

std::vector<RawEvent> label_events(std::vector<RawEvent> events,
                                   const GroundTruth& truth) {
  if (truth.mode == GroundTruth::Mode::kIds) {
    for (auto& ev : events) ev.malicious = truth.ids.count(ev.id) != 0;
    return events;
  }
  for (auto& ev : events) {
    std::int64_t t = epoch_seconds(ev.ts);
    bool hit = false;
    for (const auto& w : truth.windows) {
      if (w.user != ev.user) continue;
      if (t >= epoch_seconds(w.start) && t < epoch_seconds(w.end)) {
        hit = true;
        break;
      }
    }
    ev.malicious = hit;
  }
  return events;
}

void write_error_report(const std::string& path,
                        const std::vector<RowError>& errors) {
  std::ostringstream out;
  write_csv_row(out, {"file", "line", "reason"});
  for (const auto& e : errors)
    write_csv_row(out, {e.file, std::to_string(e.line), e.reason});
  atomic_write_file(path, out.str());
}

}  // namespace itd::ingest
