#include "itd/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <tuple>

#include "itd/csv.hpp"
#include "json.hpp"

namespace itd::prep {

TypeTable TypeTable::defaults() {
  TypeTable t;
  t.canonical = {{"Logon", 0},     {"Logoff", 1},    {"email", 2},
                 {"Http", 3},      {"File Open", 4}, {"File Write", 5},
                 {"Connect", 6},   {"Disconnect", 7}};
  t.fold = {{"File Copy", "File Write"}, {"File Delete", "File Write"},
            {"visit", "Http"},           {"download", "Http"},
            {"upload", "Http"},          {"WWW Visit", "Http"},
            {"WWW Download", "Http"},    {"WWW Upload", "Http"}};
  return t;
}

int TypeTable::id_of(const std::string& verb) const {
  auto it = canonical.find(verb);
  if (it != canonical.end()) return it->second;
  auto f = fold.find(verb);
  if (f != fold.end()) {
    auto c = canonical.find(f->second);
    if (c != canonical.end()) return c->second;
    throw ConfigError("fold target '" + f->second + "' is not canonical");
  }
  throw DataError("unknown activity verb '" + verb + "'");
}

const std::string& TypeTable::name_of(int id) const {
  for (const auto& [name, i] : canonical)
    if (i == id) return name;
  throw ConfigError("no activity type with id " + std::to_string(id));
}

std::uint64_t TypeTable::hash() const {
  std::string s;
  for (const auto& [name, id] : canonical)
    s += name + "=" + std::to_string(id) + ";";
  s += "|";
  for (const auto& [from, to] : fold) s += from + ">" + to + ";";
  return fnv1a64(s);
}

bool FeatureLayout::is_binary(int index) const {
  if (index == kSupervisorPc || index == kAssignedPc || index == kWeekend)
    return true;
  if (index >= kFileToRemovable && index < kFileFlagWords) return true;
  if (index == kDeviceConnect || index == kDeviceDisconnect) return true;
  if (index == kHttpFlagUrl) return true;
  if (index >= kHttpVisit && index <= kHttpUpload) return true;
  if (index >= kOneHotBase && index < kOneHotBase + knTypes) return true;
  return false;
}

ExtClass ext_class(const std::string& filename) {
  auto dot = filename.find_last_of('.');
  std::string ext =
      dot == std::string::npos ? "" : lowercase(filename.substr(dot + 1));
  static const std::map<std::string, ExtClass> kClasses = {
      {"zip", ExtClass::kCompressed}, {"rar", ExtClass::kCompressed},
      {"7z", ExtClass::kCompressed},  {"gz", ExtClass::kCompressed},
      {"jpg", ExtClass::kImage},      {"jpeg", ExtClass::kImage},
      {"png", ExtClass::kImage},      {"gif", ExtClass::kImage},
      {"bmp", ExtClass::kImage},      {"doc", ExtClass::kDocument},
      {"docx", ExtClass::kDocument},  {"pdf", ExtClass::kDocument},
      {"xls", ExtClass::kDocument},   {"xlsx", ExtClass::kDocument},
      {"ppt", ExtClass::kDocument},   {"pptx", ExtClass::kDocument},
      {"txt", ExtClass::kText},       {"csv", ExtClass::kText},
      {"log", ExtClass::kText},       {"exe", ExtClass::kExecutable},
      {"dll", ExtClass::kExecutable}, {"msi", ExtClass::kExecutable},
      {"bat", ExtClass::kExecutable}, {"sh", ExtClass::kExecutable}};
  auto it = kClasses.find(ext);
  return it == kClasses.end() ? ExtClass::kOther : it->second;
}

ContextMap load_context(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open context file: " + path);
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw DataError(path + ": empty context file");
  auto col = [&](const char* name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ConfigError(path + ": missing required column '" +
                        std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::size_t cu = col("user"), ca = col("assigned_pc"),
              cs = col("supervisor_pc");
  ContextMap map;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() <= std::max({cu, ca, cs}))
      throw DataError(path + ":" + std::to_string(reader.record_line()) +
                      ": short row");
    map[row[cu]] = {row[ca], row[cs]};
  }
  return map;
}

int encode_code(int type_id, int hour) {
  if (type_id < 0 || type_id >= knTypes)
    throw ConfigError("type_id out of range: " + std::to_string(type_id));
  if (hour < 0 || hour >= kHoursPerDay)
    throw ConfigError("hour out of range: " + std::to_string(hour));
  return type_id * kHoursPerDay + hour;
}

std::string type_verb(const ingest::RawEvent& event) {
  if (event.kind == ingest::LogKind::kEmail) return "email";
  auto it = event.payload.find("activity");
  if (it != event.payload.end() && !it->second.empty()) return it->second;
  if (event.kind == ingest::LogKind::kHttp) return "visit";
  throw DataError("event " + event.id + " lacks an activity verb");
}

namespace {

long count_flag_words(const std::string& content,
                      const std::vector<std::string>& flag_words) {
  std::string lc = lowercase(content);
  long total = 0;
  for (const auto& w : flag_words) {
    std::string lw = lowercase(w);
    if (lw.empty()) continue;
    for (std::size_t pos = lc.find(lw); pos != std::string::npos;
         pos = lc.find(lw, pos + lw.size()))
      ++total;
  }
  return total;
}

std::string host_of(const std::string& url) {
  std::string rest = url;
  auto scheme = rest.find("://");
  if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
  auto end = rest.find_first_of("/?#:");
  if (end != std::string::npos) rest = rest.substr(0, end);
  return lowercase(rest);
}

bool host_matches(const std::string& host, const std::string& domain) {
  std::string d = lowercase(domain);
  if (host == d) return true;
  return host.size() > d.size() &&
         host.compare(host.size() - d.size() - 1, d.size() + 1, "." + d) == 0;
}

bool parse_bool(const std::string& s) {
  std::string v = lowercase(trim(s));
  return v == "true" || v == "1" || v == "yes";
}

std::string domain_of_address(const std::string& address) {
  auto at = address.find_last_of('@');
  if (at == std::string::npos) return "";
  return lowercase(trim(address.substr(at + 1)));
}

// `attachments` entries look like `name.ext(1234)`, semicolon-separated.
void add_attachment_sizes(const std::string& attachments, double* size_slots) {
  for (const auto& raw : split(attachments, ';')) {
    std::string entry = trim(raw);
    if (entry.empty()) continue;
    std::string name = entry;
    double size = 0.0;
    auto open = entry.find_last_of('(');
    if (open != std::string::npos && entry.back() == ')') {
      name = entry.substr(0, open);
      try {
        size = std::stod(entry.substr(open + 1,
                                      entry.size() - open - 2));
      } catch (const std::exception&) {
        size = 0.0;
      }
    }
    size_slots[static_cast<int>(ext_class(name))] += size;
  }
}

}  // namespace

std::vector<double> extract_features(const ingest::RawEvent& event,
                                     const ContextMap& context,
                                     const TypeTable& table,
                                     const FeatureLayout& layout,
                                     const PrepConfig& cfg) {
  if (layout.dim < FeatureLayout::kUsed)
    throw ConfigError("feature_dim must be at least " +
                      std::to_string(FeatureLayout::kUsed));
  auto ctx = context.find(event.user);
  if (ctx == context.end())
    throw DataError("no context row for user '" + event.user + "'");

  std::vector<double> f(static_cast<std::size_t>(layout.dim), 0.0);
  f[FeatureLayout::kSupervisorPc] =
      event.pc == ctx->second.supervisor_pc ? 1.0 : 0.0;
  f[FeatureLayout::kAssignedPc] =
      event.pc == ctx->second.assigned_pc ? 1.0 : 0.0;
  double h = event.ts.hour + event.ts.minute / 60.0 + event.ts.second / 3600.0;
  double w0 = cfg.work_start, w1 = cfg.work_end;
  f[FeatureLayout::kAfterHours] = h > w1 ? h - w1 : (h < w0 ? w0 - h : 0.0);
  f[FeatureLayout::kWeekend] = is_weekend(event.ts) ? 1.0 : 0.0;

  auto payload = [&](const char* key) -> const std::string& {
    static const std::string kEmpty;
    auto it = event.payload.find(key);
    return it == event.payload.end() ? kEmpty : it->second;
  };

  switch (event.kind) {
    case ingest::LogKind::kLogon:
      break;
    case ingest::LogKind::kDevice: {
      const std::string& verb = payload("activity");
      if (verb == "Connect") f[FeatureLayout::kDeviceConnect] = 1.0;
      if (verb == "Disconnect") f[FeatureLayout::kDeviceDisconnect] = 1.0;
      break;
    }
    case ingest::LogKind::kFile: {
      f[FeatureLayout::kFileToRemovable] =
          parse_bool(payload("to_removable_media")) ? 1.0 : 0.0;
      f[FeatureLayout::kFileFromRemovable] =
          parse_bool(payload("from_removable_media")) ? 1.0 : 0.0;
      const std::string& verb = payload("activity");
      if (verb == "File Open") f[FeatureLayout::kFileOpen] = 1.0;
      if (verb == "File Write") f[FeatureLayout::kFileWrite] = 1.0;
      if (verb == "File Delete") f[FeatureLayout::kFileDelete] = 1.0;
      if (verb == "File Copy") f[FeatureLayout::kFileCopy] = 1.0;
      f[FeatureLayout::kFileClassBase +
        static_cast<int>(ext_class(payload("filename")))] = 1.0;
      f[FeatureLayout::kFileFlagWords] = static_cast<double>(
          count_flag_words(payload("content"), cfg.flag_words));
      break;
    }
    case ingest::LogKind::kEmail: {
      std::string org = lowercase(cfg.org_domain);
      auto count_split = [&](const std::string& field, int out_idx,
                             int in_idx) {
        for (const auto& raw : split(field, ';')) {
          std::string address = trim(raw);
          if (address.empty()) continue;
          bool internal = domain_of_address(address) == org;
          f[internal ? in_idx : out_idx] += 1.0;
        }
      };
      count_split(payload("to"), FeatureLayout::kEmailToOut,
                  FeatureLayout::kEmailToIn);
      count_split(payload("bcc"), FeatureLayout::kEmailBccOut,
                  FeatureLayout::kEmailBccIn);
      count_split(payload("cc"), FeatureLayout::kEmailCcOut,
                  FeatureLayout::kEmailCcIn);
      add_attachment_sizes(payload("attachments"),
                           &f[FeatureLayout::kEmailSizeBase]);
      f[FeatureLayout::kEmailFlagWords] = static_cast<double>(
          count_flag_words(payload("content"), cfg.flag_words));
      break;
    }
    case ingest::LogKind::kHttp: {
      std::string host = host_of(payload("url"));
      for (const auto& d : cfg.flag_domains)
        if (host_matches(host, d)) f[FeatureLayout::kHttpFlagUrl] = 1.0;
      f[FeatureLayout::kHttpFlagWords] = static_cast<double>(
          count_flag_words(payload("content"), cfg.flag_words));
      const std::string& verb = payload("activity");
      if (verb == "download" || verb == "WWW Download")
        f[FeatureLayout::kHttpDownload] = 1.0;
      else if (verb == "upload" || verb == "WWW Upload")
        f[FeatureLayout::kHttpUpload] = 1.0;
      else
        f[FeatureLayout::kHttpVisit] = 1.0;
      break;
    }
  }

  f[FeatureLayout::kOneHotBase + table.id_of(type_verb(event))] = 1.0;
  return f;
}

Activity to_activity(const ingest::RawEvent& event, const ContextMap& context,
                     const TypeTable& table, const FeatureLayout& layout,
                     const PrepConfig& cfg) {
  Activity a;
  a.user = event.user;
  a.ts = event.ts;
  a.type_id = table.id_of(type_verb(event));
  a.hour = event.ts.hour;
  a.code = encode_code(a.type_id, a.hour);
  a.features = extract_features(event, context, table, layout, cfg);
  a.malicious = event.malicious;
  a.source_event_ids = {event.id};
  return a;
}

std::vector<Activity> aggregate_hourly(const std::vector<Activity>& input,
                                       const FeatureLayout& layout) {
  struct Group {
    Activity out;
    std::vector<double> sums;
    long count = 0;
  };
  std::vector<Group> groups;
  std::map<std::tuple<std::string, std::int64_t, int>, std::size_t> index;
  for (const auto& a : input) {
    auto key = std::make_tuple(a.user, epoch_days(a.ts), a.code);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, groups.size());
      Group g;
      g.out = a;
      g.sums = a.features;
      g.count = 1;
      groups.push_back(std::move(g));
      continue;
    }
    Group& g = groups[it->second];
    for (std::size_t d = 0; d < g.sums.size(); ++d) {
      if (layout.is_binary(static_cast<int>(d)))
        g.sums[d] = std::max(g.sums[d], a.features[d]);
      else
        g.sums[d] += a.features[d];
    }
    ++g.count;
    if (epoch_seconds(a.ts) < epoch_seconds(g.out.ts)) g.out.ts = a.ts;
    g.out.malicious = g.out.malicious || a.malicious;
    g.out.source_event_ids.insert(g.out.source_event_ids.end(),
                                  a.source_event_ids.begin(),
                                  a.source_event_ids.end());
  }
  std::vector<Activity> out;
  out.reserve(groups.size());
  for (auto& g : groups) {
    for (std::size_t d = 0; d < g.sums.size(); ++d)
      g.out.features[d] = layout.is_binary(static_cast<int>(d))
                              ? g.sums[d]
                              : g.sums[d] / static_cast<double>(g.count);
    out.push_back(std::move(g.out));
  }
  return out;
}

StandardizerStats fit_standardizer(const std::vector<Activity>& train) {
  if (train.empty()) throw DataError("cannot fit standardizer on no activities");
  std::size_t dim = train[0].features.size();
  StandardizerStats stats;
  stats.mean.assign(dim, 0.0);
  stats.stddev.assign(dim, 0.0);
  for (const auto& a : train)
    for (std::size_t d = 0; d < dim; ++d) stats.mean[d] += a.features[d];
  double n = static_cast<double>(train.size());
  for (std::size_t d = 0; d < dim; ++d) stats.mean[d] /= n;
  for (const auto& a : train)
    for (std::size_t d = 0; d < dim; ++d) {
      double dev = a.features[d] - stats.mean[d];
      stats.stddev[d] += dev * dev;
    }
  for (std::size_t d = 0; d < dim; ++d)
    stats.stddev[d] = std::max(std::sqrt(stats.stddev[d] / n), 1e-8);
  return stats;
}

std::vector<Activity> apply_standardizer(const StandardizerStats& stats,
                                         std::vector<Activity> input) {
  for (auto& a : input) {
    if (a.features.size() != stats.mean.size())
      throw DataError("standardizer dimension mismatch");
    for (std::size_t d = 0; d < a.features.size(); ++d)
      a.features[d] = (a.features[d] - stats.mean[d]) / stats.stddev[d];
  }
  return input;
}

std::vector<std::vector<Activity>> sessionize(
    const std::vector<Activity>& user_activities, PrepConfig::SessionMode mode,
    const TypeTable& table) {
  std::vector<std::vector<Activity>> sessions;
  if (user_activities.empty()) return sessions;

  if (mode == PrepConfig::SessionMode::kHourly) {
    std::vector<std::vector<Activity>> groups;
    for (const auto& a : user_activities) {
      if (!groups.empty()) {
        const Activity& prev = groups.back().back();
        if (epoch_days(prev.ts) == epoch_days(a.ts) && prev.hour == a.hour) {
          groups.back().push_back(a);
          continue;
        }
      }
      groups.push_back({a});
    }
    std::vector<Activity> carry;
    for (auto& g : groups) {
      carry.insert(carry.end(), g.begin(), g.end());
      if (static_cast<int>(carry.size()) >= 5) {
        sessions.push_back(std::move(carry));
        carry.clear();
      }
    }
    if (!carry.empty()) {
      if (sessions.empty())
        sessions.push_back(std::move(carry));
      else
        sessions.back().insert(sessions.back().end(), carry.begin(),
                               carry.end());
    }
    return sessions;
  }

  const int logon_id = table.canonical.at("Logon");
  const int logoff_id = table.canonical.at("Logoff");
  std::vector<Activity> current;
  for (const auto& a : user_activities) {
    if (a.type_id == logon_id) {
      if (!current.empty()) sessions.push_back(std::move(current));
      current.clear();
      current.push_back(a);
    } else if (a.type_id == logoff_id) {
      current.push_back(a);
      sessions.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(a);
    }
  }
  if (!current.empty()) sessions.push_back(std::move(current));
  return sessions;
}

std::vector<SubSession> split_subsessions(const std::vector<Activity>& session,
                                          int max_len, int min_len) {
  std::vector<std::vector<Activity>> blocks;
  for (std::size_t i = 0; i < session.size();
       i += static_cast<std::size_t>(max_len)) {
    auto end = std::min(session.size(), i + static_cast<std::size_t>(max_len));
    blocks.emplace_back(session.begin() + static_cast<long>(i),
                        session.begin() + static_cast<long>(end));
  }
  for (std::size_t i = 1; i < blocks.size();) {
    if (static_cast<int>(blocks[i].size()) < min_len) {
      blocks[i - 1].insert(blocks[i - 1].end(), blocks[i].begin(),
                           blocks[i].end());
      blocks.erase(blocks.begin() + static_cast<long>(i));
    } else {
      ++i;
    }
  }
  if (blocks.size() > 1 && static_cast<int>(blocks[0].size()) < min_len) {
    blocks[1].insert(blocks[1].begin(), blocks[0].begin(), blocks[0].end());
    blocks.erase(blocks.begin());
  }
  std::vector<SubSession> out;
  for (auto& b : blocks) {
    SubSession s;
    s.user = b.empty() ? "" : b[0].user;
    s.activities = std::move(b);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<MaskedSequence> generate_masked(
    std::shared_ptr<const SubSession> sub) {
  std::vector<MaskedSequence> out;
  const auto& acts = sub->activities;
  out.reserve(acts.size());
  for (std::size_t t = 0; t < acts.size(); ++t) {
    MaskedSequence m;
    m.sub = sub;
    m.mask_pos = static_cast<int>(t);
    m.true_code = acts[t].code;
    m.abnormal = acts[t].malicious;
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MaskedSequence> build_sequences(
    const std::vector<Activity>& user_activities, const PrepConfig& cfg,
    const TypeTable& table) {
  std::vector<MaskedSequence> out;
  auto sessions = sessionize(user_activities, cfg.session_mode, table);
  for (std::size_t si = 0; si < sessions.size(); ++si) {
    auto subs = split_subsessions(sessions[si], cfg.max_subsession,
                                  cfg.min_subsession);
    for (std::size_t ci = 0; ci < subs.size(); ++ci) {
      auto sub = std::make_shared<SubSession>(std::move(subs[ci]));
      sub->session_id = sub->user + "#" + std::to_string(si) + "." +
                        std::to_string(ci);
      auto masked = generate_masked(sub);
      out.insert(out.end(), masked.begin(), masked.end());
    }
  }
  return out;
}

static constexpr char kCacheMagic[8] = {'I', 'T', 'D', 'C', 'A', 'C', 'H', 'E'};

void save_activities(const std::string& path,
                     const std::vector<Activity>& activities, int feature_dim,
                     const TypeTable& table) {
  std::ostringstream out;
  out.write(kCacheMagic, 8);
  write_u32le(out, 1);  // format version
  nlohmann::json manifest = {
      {"count", activities.size()},
      {"feature_dim", feature_dim},
      {"type_table_hash", table.hash()},
      {"layout_version", 1}};
  std::string mstr = manifest.dump();
  write_u32le(out, static_cast<std::uint32_t>(mstr.size()));
  out.write(mstr.data(), static_cast<long>(mstr.size()));
  auto write_str = [&](const std::string& s) {
    write_u32le(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<long>(s.size()));
  };
  for (const auto& a : activities) {
    if (static_cast<int>(a.features.size()) != feature_dim)
      throw DataError("activity feature width differs from manifest");
    write_str(a.user);
    write_u64le(out, static_cast<std::uint64_t>(epoch_seconds(a.ts)));
    write_u16le(out, static_cast<std::uint16_t>(a.type_id));
    write_u16le(out, static_cast<std::uint16_t>(a.code));
    write_u8(out, a.malicious ? 1 : 0);
    for (double v : a.features) write_f64le(out, v);
    write_u32le(out, static_cast<std::uint32_t>(a.source_event_ids.size()));
    for (const auto& id : a.source_event_ids) write_str(id);
  }
  atomic_write_file(path, out.str());
}

std::vector<Activity> load_activities(const std::string& path,
                                      int expect_feature_dim,
                                      const TypeTable& expect_table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open activity cache: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kCacheMagic, 8) != 0)
    throw DataError(path + ": not an activity cache");
  std::uint32_t version = read_u32le(in);
  if (version != 1)
    throw DataError(path + ": unsupported cache version " +
                    std::to_string(version));
  std::uint32_t mlen = read_u32le(in);
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), mlen);
  if (in.gcount() != static_cast<long>(mlen))
    throw DataError(path + ": truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(mstr);
  if (manifest.at("feature_dim").get<int>() != expect_feature_dim)
    throw DataError(path + ": cache feature_dim " +
                    std::to_string(manifest.at("feature_dim").get<int>()) +
                    " differs from configured " +
                    std::to_string(expect_feature_dim));
  if (manifest.at("type_table_hash").get<std::uint64_t>() !=
      expect_table.hash())
    throw DataError(path + ": cache was built with a different type table");
  auto read_str = [&]() {
    std::uint32_t len = read_u32le(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (in.gcount() != static_cast<long>(len))
      throw DataError(path + ": truncated record");
    return s;
  };
  std::size_t count = manifest.at("count").get<std::size_t>();
  std::vector<Activity> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Activity a;
    a.user = read_str();
    a.ts = civil_from_seconds(static_cast<std::int64_t>(read_u64le(in)));
    a.type_id = read_u16le(in);
    a.code = read_u16le(in);
    a.hour = a.code % kHoursPerDay;
    a.malicious = read_u8(in) != 0;
    a.features.resize(static_cast<std::size_t>(expect_feature_dim));
    for (double& v : a.features) v = read_f64le(in);
    std::uint32_t n_ids = read_u32le(in);
    a.source_event_ids.reserve(n_ids);
    for (std::uint32_t k = 0; k < n_ids; ++k)
      a.source_event_ids.push_back(read_str());
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace itd::prep
