#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <utility>

#include "itd/csv.hpp"
#include "itd/ingest.hpp"

namespace itd::ingest {

const char* to_string(AnomalySignature s) {
  switch (s) {
    case AnomalySignature::kAfterHoursDevice: return "AFTER_HOURS_DEVICE";
    case AnomalySignature::kFlagUrlHttp: return "FLAG_URL_HTTP";
    case AnomalySignature::kMassEmailOut: return "MASS_EMAIL_OUT";
  }
  return "?";
}

AnomalySignature signature_from_string(const std::string& name) {
  if (name == "AFTER_HOURS_DEVICE") return AnomalySignature::kAfterHoursDevice;
  if (name == "FLAG_URL_HTTP") return AnomalySignature::kFlagUrlHttp;
  if (name == "MASS_EMAIL_OUT") return AnomalySignature::kMassEmailOut;
  throw ConfigError("unknown anomaly signature: " + name);
}

namespace {

const char* const kWords[] = {
    "budget",  "minutes", "survey",  "draft",   "roadmap", "metrics",
    "invoice", "vendor",  "payroll", "release", "outage",  "kickoff",
    "summary", "agenda",  "review",  "quarter", "forecast", "onboard",
    "ticket",  "triage",  "deploy",  "backlog", "standup", "notes"};
const char* const kDomains[] = {
    "weather.com",  "cnn.com",      "espn.com",     "reuters.com",
    "nytimes.com",  "stackexchange.com", "intranet.dtaa.com", "github.com",
    "travelocity.com", "linkedin.com", "wikipedia.org", "bbc.co.uk"};
const char* const kBenignExt[] = {"docx", "xlsx", "pdf", "txt", "pptx", "csv"};
const char* const kExtDomains[] = {"gmail.com", "yahoo.com", "hotmail.com"};
const char* const kFirstNames[] = {"alex", "jordan", "casey", "riley",
                                   "morgan", "avery", "quinn", "reese"};

struct PendingEvent {
  std::int64_t t = 0;
  long seq = 0;
  LogKind kind = LogKind::kLogon;
  std::string user;
  std::string pc;
  std::map<std::string, std::string> payload;
  bool malicious = false;
};

struct Generator {
  const SyntheticConfig& cfg;
  Rng rng;
  std::vector<PendingEvent> events;
  long seq = 0;
  long normal_count = 0;
  std::vector<std::string> users, pcs, sup_pcs;

  explicit Generator(const SyntheticConfig& c) : cfg(c), rng(c.seed) {}

  std::string word() { return kWords[rng.below(std::size(kWords))]; }

  std::string words(int lo, int hi) {
    int n = rng.uniform_int(lo, hi);
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += word();
    }
    return s;
  }

  CivilTime at(int day_index, int sec_of_day) {
    CivilTime t = civil_from_days(epoch_days(cfg.start_date) + day_index);
    t.hour = sec_of_day / 3600;
    t.minute = sec_of_day / 60 % 60;
    t.second = sec_of_day % 60;
    return t;
  }

  void push(LogKind kind, int day, int sec, const std::string& user,
            const std::string& pc, std::map<std::string, std::string> payload,
            bool malicious) {
    PendingEvent ev;
    ev.t = epoch_seconds(at(day, sec));
    ev.seq = seq++;
    ev.kind = kind;
    ev.user = user;
    ev.pc = pc;
    ev.payload = std::move(payload);
    ev.malicious = malicious;
    events.push_back(std::move(ev));
    if (!malicious) ++normal_count;
  }

  std::string email_of(int u) { return users[u] + "@" + cfg.org_domain; }

  std::string external_address() {
    std::string name = kFirstNames[rng.below(std::size(kFirstNames))];
    name += std::to_string(rng.uniform_int(10, 99));
    return name + "@" + kExtDomains[rng.below(std::size(kExtDomains))];
  }

  std::string internal_recipients(int self, int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
      int other = static_cast<int>(rng.below(users.size()));
      if (static_cast<int>(users.size()) > 1)
        while (other == self) other = static_cast<int>(rng.below(users.size()));
      if (i) s += ';';
      s += email_of(other);
    }
    return s;
  }

  std::string attachments(int lo, int hi, int size_lo, int size_hi) {
    int n = rng.uniform_int(lo, hi);
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ';';
      s += word() + "." + kBenignExt[rng.below(std::size(kBenignExt))] + "(" +
           std::to_string(rng.uniform_int(size_lo, size_hi)) + ")";
    }
    return s;
  }

  void normal_day(int u, int day) {
    const std::string& pc = pcs[u];
    int logon = 9 * 3600 + rng.below(1800);
    int logoff = 17 * 3600 + rng.below(1800);
    push(LogKind::kLogon, day, logon, users[u], pc, {{"activity", "Logon"}},
         false);
    double lambda = std::max(0.5, cfg.events_per_user_day - 2.0);
    int inner = rng.poisson(lambda);
    for (int i = 0; i < inner; ++i) {
      int t = logon + 300 + rng.below(17 * 3600 - 600 - logon);
      double kind = rng.uniform();
      if (kind < 0.45) {
        std::string url = "https://www.";
        url += kDomains[rng.below(std::size(kDomains))];
        url += "/" + word();
        double verb = rng.uniform();
        push(LogKind::kHttp, day, t, users[u], pc,
             {{"url", url},
              {"activity", verb < 0.9 ? "visit" : verb < 0.97 ? "download" : "upload"},
              {"content", words(5, 12)}},
             false);
      } else if (kind < 0.70) {
        bool has_cc = rng.uniform() < 0.2;
        push(LogKind::kEmail, day, t, users[u], pc,
             {{"to", internal_recipients(u, rng.uniform_int(1, 3))},
              {"cc", has_cc ? internal_recipients(u, 1) : ""},
              {"bcc", ""},
              {"from", email_of(u)},
              {"size", std::to_string(rng.uniform_int(500, 20000))},
              {"attachments",
               rng.uniform() < 0.4 ? attachments(1, 2, 1000, 50000) : ""},
              {"content", words(8, 20)}},
             false);
      } else if (kind < 0.90) {
        double verb = rng.uniform();
        std::string activity = verb < 0.5    ? "File Open"
                               : verb < 0.8  ? "File Write"
                               : verb < 0.95 ? "File Copy"
                                             : "File Delete";
        bool to_rm = activity == "File Copy" && rng.uniform() < 0.5;
        bool from_rm = activity == "File Copy" && !to_rm && rng.uniform() < 0.2;
        push(LogKind::kFile, day, t, users[u], pc,
             {{"filename",
               word() + "_" + std::to_string(rng.uniform_int(1, 99)) + "." +
                   kBenignExt[rng.below(std::size(kBenignExt))]},
              {"activity", activity},
              {"to_removable_media", to_rm ? "True" : "False"},
              {"from_removable_media", from_rm ? "True" : "False"},
              {"content", words(4, 10)}},
             false);
      } else {
        int t2 = std::min(t + rng.uniform_int(300, 1800), logoff - 60);
        push(LogKind::kDevice, day, t, users[u], pc,
             {{"activity", "Connect"}}, false);
        if (t2 > t)
          push(LogKind::kDevice, day, t2, users[u], pc,
               {{"activity", "Disconnect"}}, false);
      }
    }
    push(LogKind::kLogon, day, logoff, users[u], pc, {{"activity", "Logoff"}},
         false);
  }

  // Emits one anomalous episode of exactly `size` flagged events.
  void episode(int size, const std::vector<int>& candidate_days) {
    int u = static_cast<int>(rng.below(users.size()));
    switch (cfg.anomaly_signature) {
      case AnomalySignature::kAfterHoursDevice: {
        int day = static_cast<int>(rng.below(static_cast<std::size_t>(cfg.days)));
        const std::string& pc = sup_pcs[u];
        int t = 3600 + static_cast<int>(rng.below(7200));
        bool wrap = size >= 3;
        if (wrap)
          push(LogKind::kLogon, day, t, users[u], pc, {{"activity", "Logon"}},
               true);
        int devices = wrap ? size - 2 : size;
        for (int k = 0; k < devices; ++k) {
          t += 120 + static_cast<int>(rng.below(180));
          push(LogKind::kDevice, day, t, users[u], pc,
               {{"activity", k % 2 == 0 ? "Connect" : "Disconnect"}}, true);
        }
        if (wrap)
          push(LogKind::kLogon, day, t + 300 + static_cast<int>(rng.below(600)),
               users[u], pc, {{"activity", "Logoff"}}, true);
        break;
      }
      case AnomalySignature::kFlagUrlHttp: {
        int day = candidate_days[rng.below(candidate_days.size())];
        int t = 10 * 3600 + static_cast<int>(rng.below(6 * 3600));
        for (int k = 0; k < size; ++k) {
          t += 60 + static_cast<int>(rng.below(240));
          push(LogKind::kHttp, day, t, users[u], pcs[u],
               {{"url", "https://www.wikileaks.org/" + word()},
                {"activity", rng.uniform() < 0.7 ? "visit" : "download"},
                {"content", words(5, 12)}},
               true);
        }
        break;
      }
      case AnomalySignature::kMassEmailOut: {
        int day = candidate_days[rng.below(candidate_days.size())];
        int t = 16 * 3600 + static_cast<int>(rng.below(3000));
        for (int k = 0; k < size; ++k) {
          t += 30 + static_cast<int>(rng.below(120));
          int n_to = rng.uniform_int(4, 8);
          std::string to;
          for (int i = 0; i < n_to; ++i) {
            if (i) to += ';';
            to += external_address();
          }
          push(LogKind::kEmail, day, t, users[u], pcs[u],
               {{"to", to},
                {"cc", ""},
                {"bcc", rng.uniform() < 0.5 ? external_address() : ""},
                {"from", email_of(u)},
                {"size", std::to_string(rng.uniform_int(20000, 80000))},
                {"attachments", attachments(1, 2, 50000, 400000)},
                {"content", words(8, 20)}},
               true);
        }
        break;
      }
    }
  }
};

}  // namespace

SyntheticOutput generate_synthetic(const SyntheticConfig& config,
                                   const std::string& out_dir) {
  if (config.n_users <= 0 || config.days <= 0)
    throw ConfigError("synthetic: n_users and days must be positive");
  if (config.anomaly_rate < 0.0 || config.anomaly_rate > 1.0)
    throw ConfigError("synthetic: anomaly_rate must lie in [0,1]");
  if (config.anomaly_rate >= 1.0 && config.anomaly_rate > 0.0)
    throw ConfigError("synthetic: anomaly_rate must be < 1");
  if (config.events_per_user_day <= 0.0)
    throw ConfigError("synthetic: events_per_user_day must be positive");

  Generator gen(config);
  for (int u = 0; u < config.n_users; ++u) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "U%04d", u + 1);
    gen.users.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "PC-%04d", 101 + u);
    gen.pcs.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "PC-%04d", 901 + u / 4);
    gen.sup_pcs.emplace_back(buf);
  }

  std::vector<int> weekdays;
  for (int d = 0; d < config.days; ++d)
    if (!is_weekend(gen.at(d, 0))) weekdays.push_back(d);

  for (int u = 0; u < config.n_users; ++u)
    for (int d : weekdays) gen.normal_day(u, d);

  long target = 0;
  if (config.anomaly_rate > 0.0) {
    target = std::llround(config.anomaly_rate / (1.0 - config.anomaly_rate) *
                          static_cast<double>(gen.normal_count));
    if (target == 0) target = 1;
  }
  int cap;
  switch (config.anomaly_signature) {
    case AnomalySignature::kAfterHoursDevice: cap = 6; break;
    case AnomalySignature::kFlagUrlHttp: cap = 5; break;
    default: cap = 4; break;
  }
  std::vector<int> any_days(weekdays);
  if (any_days.empty())
    for (int d = 0; d < config.days; ++d) any_days.push_back(d);
  long flagged = 0;
  while (flagged < target) {
    int size = static_cast<int>(std::min<long>(target - flagged, cap));
    gen.episode(size, any_days);
    flagged += size;
  }

  std::stable_sort(gen.events.begin(), gen.events.end(),
                   [](const PendingEvent& a, const PendingEvent& b) {
                     return a.t != b.t ? a.t < b.t : a.seq < b.seq;
                   });

  std::filesystem::create_directories(out_dir);
  SyntheticOutput out;
  std::ostringstream truth;
  std::map<LogKind, std::ostringstream> streams;
  std::map<LogKind, long> counters;
  const std::map<LogKind, std::vector<std::string>> headers = {
      {LogKind::kLogon, {"id", "date", "user", "pc", "activity"}},
      {LogKind::kDevice, {"id", "date", "user", "pc", "activity"}},
      {LogKind::kFile,
       {"id", "date", "user", "pc", "filename", "activity",
        "to_removable_media", "from_removable_media", "content"}},
      {LogKind::kEmail,
       {"id", "date", "user", "pc", "to", "cc", "bcc", "from", "size",
        "attachments", "content"}},
      {LogKind::kHttp, {"id", "date", "user", "pc", "url", "activity",
                        "content"}}};
  const std::map<LogKind, char> prefixes = {{LogKind::kLogon, 'L'},
                                            {LogKind::kDevice, 'D'},
                                            {LogKind::kFile, 'F'},
                                            {LogKind::kEmail, 'E'},
                                            {LogKind::kHttp, 'H'}};
  for (LogKind k : kAllKinds) write_csv_row(streams[k], headers.at(k));

  for (const auto& ev : gen.events) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "%c%07ld", prefixes.at(ev.kind),
                  ++counters[ev.kind]);
    CivilTime ct = civil_from_seconds(ev.t);
    std::vector<std::string> row = {idbuf, format_civil(ct, kCertTimestampFormat),
                                    ev.user, ev.pc};
    for (std::size_t c = 4; c < headers.at(ev.kind).size(); ++c) {
      auto it = ev.payload.find(headers.at(ev.kind)[c]);
      row.push_back(it != ev.payload.end() ? it->second : "");
    }
    write_csv_row(streams[ev.kind], row);
    ++out.total_events;
    if (ev.malicious) {
      truth << idbuf << "\n";
      ++out.malicious_events;
    }
  }

  for (LogKind k : kAllKinds) {
    std::string path = out_dir + "/" + to_string(k) + ".csv";
    atomic_write_file(path, streams[k].str());
    out.files[to_string(k)] = path;
  }
  out.files["truth"] = out_dir + "/truth.csv";
  atomic_write_file(out.files["truth"], truth.str());

  std::ostringstream context;
  write_csv_row(context, {"user", "assigned_pc", "supervisor_pc"});
  for (int u = 0; u < config.n_users; ++u)
    write_csv_row(context, {gen.users[u], gen.pcs[u], gen.sup_pcs[u]});
  out.files["context"] = out_dir + "/context.csv";
  atomic_write_file(out.files["context"], context.str());
  return out;
}

}  // namespace itd::ingest
