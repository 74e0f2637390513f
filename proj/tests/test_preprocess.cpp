#include <unistd.h>

#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "itd/preprocess.hpp"

using namespace itd;
using namespace itd::prep;
namespace fs = std::filesystem;

namespace {

const TypeTable kTable = TypeTable::defaults();
const FeatureLayout kLayout;
const PrepConfig kCfg;

ContextMap one_user_context() {
  return {{"U1", {"PC-1", "PC-9"}}};
}

ingest::RawEvent make_event(ingest::LogKind kind, const CivilTime& ts,
                            std::map<std::string, std::string> payload,
                            const std::string& pc = "PC-1") {
  ingest::RawEvent ev;
  ev.id = "X1";
  ev.ts = ts;
  ev.user = "U1";
  ev.pc = pc;
  ev.kind = kind;
  ev.payload = std::move(payload);
  return ev;
}

Activity make_activity(const std::string& user, const CivilTime& ts,
                       int type_id, std::vector<double> features) {
  Activity a;
  a.user = user;
  a.ts = ts;
  a.type_id = type_id;
  a.hour = ts.hour;
  a.code = encode_code(type_id, ts.hour);
  a.features = std::move(features);
  a.source_event_ids = {"e"};
  return a;
}

Activity typed(int type_id) {
  return make_activity("U1", {2010, 1, 4, 10, 0, 0}, type_id,
                       std::vector<double>(54, 0.0));
}

}  // namespace

TEST_CASE("activity codes") {
  CHECK(encode_code(0, 6) == 6);
  CHECK(encode_code(7, 23) == 191);
  CHECK(encode_code(3, 0) == 72);
  CHECK_THROWS_AS(encode_code(8, 0), ConfigError);
  CHECK_THROWS_AS(encode_code(0, 24), ConfigError);
  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    int type_id = rng.uniform_int(0, 7);
    int hour = rng.uniform_int(0, 23);
    int code = encode_code(type_id, hour);
    CHECK(code / 24 == type_id);
    CHECK(code % 24 == hour);
    CHECK(code >= 0);
    CHECK(code < 192);
  }
}

TEST_CASE("type table folds variant verbs") {
  CHECK(kTable.id_of("Logon") == 0);
  CHECK(kTable.id_of("Logoff") == 1);
  CHECK(kTable.id_of("email") == 2);
  CHECK(kTable.id_of("Http") == 3);
  CHECK(kTable.id_of("File Open") == 4);
  CHECK(kTable.id_of("File Write") == 5);
  CHECK(kTable.id_of("Connect") == 6);
  CHECK(kTable.id_of("Disconnect") == 7);
  CHECK(kTable.id_of("File Copy") == 5);
  CHECK(kTable.id_of("File Delete") == 5);
  CHECK(kTable.id_of("visit") == 3);
  CHECK(kTable.id_of("download") == 3);
  CHECK(kTable.id_of("upload") == 3);
  CHECK_THROWS_AS(kTable.id_of("Reboot"), DataError);
  CHECK(kTable.name_of(5) == "File Write");

  TypeTable other = kTable;
  other.fold["telnet"] = "Http";
  CHECK(other.hash() != kTable.hash());
  CHECK(TypeTable::defaults().hash() == kTable.hash());
}

TEST_CASE("evening logon features") {
  auto ev = make_event(ingest::LogKind::kLogon, {2010, 1, 6, 18, 30, 0},
                       {{"activity", "Logon"}});
  auto f = extract_features(ev, one_user_context(), kTable, kLayout, kCfg);
  REQUIRE(static_cast<int>(f.size()) == 54);
  CHECK(f[FeatureLayout::kSupervisorPc] == 0.0);
  CHECK(f[FeatureLayout::kAssignedPc] == 1.0);
  CHECK(f[FeatureLayout::kAfterHours] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(f[FeatureLayout::kWeekend] == 0.0);
  for (int d = 4; d < FeatureLayout::kOneHotBase; ++d) CHECK(f[d] == 0.0);
  for (int t = 0; t < 8; ++t)
    CHECK(f[FeatureLayout::kOneHotBase + t] == (t == 0 ? 1.0 : 0.0));
  for (int d = FeatureLayout::kUsed; d < 54; ++d) CHECK(f[d] == 0.0);
}

TEST_CASE("pre-dawn hours count toward the 9am boundary") {
  auto ev = make_event(ingest::LogKind::kDevice, {2010, 1, 6, 1, 0, 0},
                       {{"activity", "Connect"}}, "PC-9");
  auto f = extract_features(ev, one_user_context(), kTable, kLayout, kCfg);
  CHECK(f[FeatureLayout::kAfterHours] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(f[FeatureLayout::kSupervisorPc] == 1.0);
  CHECK(f[FeatureLayout::kAssignedPc] == 0.0);
  CHECK(f[FeatureLayout::kDeviceConnect] == 1.0);
  CHECK(f[FeatureLayout::kDeviceDisconnect] == 0.0);
}

TEST_CASE("flagged url detection covers subdomains") {
  auto ev = make_event(
      ingest::LogKind::kHttp, {2010, 1, 6, 10, 0, 0},
      {{"url", "https://www.wikileaks.org/x"}, {"activity", "visit"},
       {"content", "survey results pending"}});
  auto f = extract_features(ev, one_user_context(), kTable, kLayout, kCfg);
  CHECK(f[FeatureLayout::kSupervisorPc] == 0.0);
  CHECK(f[FeatureLayout::kAssignedPc] == 1.0);
  CHECK(f[FeatureLayout::kAfterHours] == 0.0);
  CHECK(f[FeatureLayout::kWeekend] == 0.0);
  CHECK(f[FeatureLayout::kHttpFlagUrl] == 1.0);
  CHECK(f[FeatureLayout::kHttpFlagWords] == 0.0);
  CHECK(f[FeatureLayout::kHttpVisit] == 1.0);
  CHECK(f[FeatureLayout::kHttpDownload] == 0.0);
  CHECK(f[FeatureLayout::kHttpUpload] == 0.0);
  CHECK(f[FeatureLayout::kOneHotBase + 3] == 1.0);

  auto benign = make_event(ingest::LogKind::kHttp, {2010, 1, 6, 10, 0, 0},
                           {{"url", "https://notwikileaks.org/x"},
                            {"activity", "visit"},
                            {"content", ""}});
  auto g = extract_features(benign, one_user_context(), kTable, kLayout, kCfg);
  CHECK(g[FeatureLayout::kHttpFlagUrl] == 0.0);
}

TEST_CASE("email recipient and attachment accounting") {
  auto ev = make_event(
      ingest::LogKind::kEmail, {2010, 1, 6, 11, 0, 0},
      {{"to", "a@gmail.com;b@yahoo.com"},
       {"cc", "c@dtaa.com"},
       {"bcc", ""},
       {"from", "U1@dtaa.com"},
       {"size", "4000"},
       {"attachments", "r.doc(1000)"},
       {"content", "quarterly figures"}});
  auto f = extract_features(ev, one_user_context(), kTable, kLayout, kCfg);
  CHECK(f[FeatureLayout::kEmailToOut] == 2.0);
  CHECK(f[FeatureLayout::kEmailToIn] == 0.0);
  CHECK(f[FeatureLayout::kEmailBccOut] == 0.0);
  CHECK(f[FeatureLayout::kEmailBccIn] == 0.0);
  CHECK(f[FeatureLayout::kEmailCcOut] == 0.0);
  CHECK(f[FeatureLayout::kEmailCcIn] == 1.0);
  for (int c = 0; c < 6; ++c)
    CHECK(f[FeatureLayout::kEmailSizeBase + c] == (c == 2 ? 1000.0 : 0.0));
  CHECK(f[FeatureLayout::kEmailFlagWords] == 0.0);
  CHECK(f[FeatureLayout::kOneHotBase + 2] == 1.0);
}

TEST_CASE("flag words are counted case-insensitively") {
  auto ev = make_event(
      ingest::LogKind::kFile, {2010, 1, 6, 11, 0, 0},
      {{"filename", "x.exe"},
       {"activity", "File Copy"},
       {"to_removable_media", "True"},
       {"from_removable_media", "False"},
       {"content", "JOBS key log and key-logging jobs again"}});
  auto f = extract_features(ev, one_user_context(), kTable, kLayout, kCfg);
  // "jobs" x2, "key log" x2 (once inside "key-logging"... it is not: hyphen),
  // so "key log" x1, "key-logging" x1.
  CHECK(f[FeatureLayout::kFileFlagWords] == 4.0);
  CHECK(f[FeatureLayout::kFileToRemovable] == 1.0);
  CHECK(f[FeatureLayout::kFileFromRemovable] == 0.0);
  CHECK(f[FeatureLayout::kFileCopy] == 1.0);
  CHECK(f[FeatureLayout::kFileOpen] == 0.0);
  CHECK(f[FeatureLayout::kFileClassBase +
          static_cast<int>(ExtClass::kExecutable)] == 1.0);
  CHECK(f[FeatureLayout::kOneHotBase + 5] == 1.0);  // folded to File Write
}

TEST_CASE("every event fills exactly one type block") {
  Rng rng(77);
  ContextMap ctx = one_user_context();
  auto block_nonzero = [](const std::vector<double>& f, int lo, int hi) {
    for (int d = lo; d <= hi; ++d)
      if (f[d] != 0.0) return true;
    return false;
  };
  for (int i = 0; i < 100; ++i) {
    CivilTime ts{2010, 1, 4 + static_cast<int>(rng.below(20)),
                 static_cast<int>(rng.below(24)),
                 static_cast<int>(rng.below(60)), 0};
    int kind = rng.uniform_int(0, 4);
    ingest::RawEvent ev;
    switch (kind) {
      case 0:
        ev = make_event(ingest::LogKind::kLogon, ts,
                        {{"activity", rng.bernoulli(0.5) ? "Logon" : "Logoff"}});
        break;
      case 1:
        ev = make_event(ingest::LogKind::kDevice, ts,
                        {{"activity", rng.bernoulli(0.5) ? "Connect"
                                                         : "Disconnect"}});
        break;
      case 2:
        ev = make_event(ingest::LogKind::kFile, ts,
                        {{"filename", "a.pdf"},
                         {"activity", "File Open"},
                         {"to_removable_media", "False"},
                         {"from_removable_media", "True"},
                         {"content", "jobs"}});
        break;
      case 3:
        ev = make_event(ingest::LogKind::kEmail, ts,
                        {{"to", "a@dtaa.com"},
                         {"cc", ""},
                         {"bcc", "b@gmail.com"},
                         {"from", "U1@dtaa.com"},
                         {"size", "100"},
                         {"attachments", ""},
                         {"content", "x"}});
        break;
      default:
        ev = make_event(ingest::LogKind::kHttp, ts,
                        {{"url", "http://a.example.com/b"},
                         {"activity", "download"},
                         {"content", "x"}});
        break;
    }
    auto f = extract_features(ev, ctx, kTable, kLayout, kCfg);
    int nonzero_blocks = 0;
    nonzero_blocks += block_nonzero(f, 4, 16);
    nonzero_blocks += block_nonzero(f, 17, 18);
    nonzero_blocks += block_nonzero(f, 19, 31);
    nonzero_blocks += block_nonzero(f, 32, 36);
    int expected_blocks = ev.kind == ingest::LogKind::kLogon ? 0 : 1;
    CHECK(nonzero_blocks == expected_blocks);
    double onehot_sum = 0.0;
    int ones = 0;
    for (int t = 0; t < 8; ++t) {
      onehot_sum += f[FeatureLayout::kOneHotBase + t];
      if (f[FeatureLayout::kOneHotBase + t] == 1.0) ++ones;
    }
    CHECK(onehot_sum == 1.0);
    CHECK(ones == 1);
    Activity a = to_activity(ev, ctx, kTable, kLayout, kCfg);
    CHECK(a.code == a.type_id * 24 + a.hour);
    CHECK(a.hour == ts.hour);
  }
}

TEST_CASE("missing context user is an error") {
  auto ev = make_event(ingest::LogKind::kLogon, {2010, 1, 6, 9, 0, 0},
                       {{"activity", "Logon"}});
  ev.user = "UNKNOWN";
  CHECK_THROWS_AS(
      extract_features(ev, one_user_context(), kTable, kLayout, kCfg),
      DataError);
}

TEST_CASE("hourly aggregation combines binaries by max") {
  Activity a = typed(3), b = typed(3);
  a.features[FeatureLayout::kHttpFlagUrl] = 1.0;
  a.features[FeatureLayout::kHttpFlagWords] = 2.0;
  b.features[FeatureLayout::kHttpFlagUrl] = 0.0;
  b.features[FeatureLayout::kHttpFlagWords] = 4.0;
  b.ts.minute = 30;
  b.malicious = true;
  b.source_event_ids = {"f"};
  auto out = aggregate_hourly({a, b}, kLayout);
  REQUIRE(out.size() == 1);
  CHECK(out[0].features[FeatureLayout::kHttpFlagUrl] == 1.0);   // max
  CHECK(out[0].features[FeatureLayout::kHttpFlagWords] == 3.0); // mean
  CHECK(out[0].ts.minute == 0);  // earliest member
  CHECK(out[0].malicious);
  CHECK(out[0].source_event_ids == std::vector<std::string>{"e", "f"});
}

TEST_CASE("aggregation leaves singletons alone") {
  Activity a = typed(2);
  a.features[20] = 3.25;
  auto out = aggregate_hourly({a}, kLayout);
  REQUIRE(out.size() == 1);
  CHECK(out[0].features == a.features);
  CHECK(out[0].ts == a.ts);
}

TEST_CASE("aggregation matches a brute-force group-by oracle") {
  Rng rng(2024);
  std::vector<Activity> input;
  for (int i = 0; i < 20; ++i) {
    CivilTime ts{2010, 1, 4 + static_cast<int>(rng.below(2)),
                 9 + static_cast<int>(rng.below(3)),
                 static_cast<int>(rng.below(60)), 0};
    Activity a = make_activity(rng.bernoulli(0.5) ? "U1" : "U2", ts,
                               static_cast<int>(rng.below(3)),
                               std::vector<double>(54, 0.0));
    for (int d = 0; d < 54; ++d) a.features[d] = rng.uniform_int(0, 3) / 2.0;
    a.malicious = rng.bernoulli(0.2);
    a.source_event_ids = {"e" + std::to_string(i)};
    input.push_back(a);
  }
  auto out = aggregate_hourly(input, kLayout);

  // Oracle: enumerate distinct keys by scanning pairs, then recompute each
  // dimension from scratch.
  std::set<std::string> seen;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < input.size(); ++i) {
    std::string key = input[i].user + "|" +
                      std::to_string(epoch_days(input[i].ts)) + "|" +
                      std::to_string(input[i].code);
    if (!seen.insert(key).second) continue;
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < input.size(); ++j) {
      std::string kj = input[j].user + "|" +
                       std::to_string(epoch_days(input[j].ts)) + "|" +
                       std::to_string(input[j].code);
      if (kj == key) members.push_back(j);
    }
    groups.push_back(members);
  }
  REQUIRE(out.size() == groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    const Activity& got = out[g];
    CHECK(got.user == input[members[0]].user);
    long total = 0;
    for (auto j : members) total += 1;
    for (int d = 0; d < 54; ++d) {
      double expect;
      if (kLayout.is_binary(d)) {
        expect = 0.0;
        for (auto j : members) expect = std::max(expect, input[j].features[d]);
      } else {
        expect = 0.0;
        for (auto j : members) expect += input[j].features[d];
        expect /= static_cast<double>(total);
      }
      CHECK(got.features[d] == doctest::Approx(expect).epsilon(1e-12));
    }
    std::int64_t earliest = epoch_seconds(input[members[0]].ts);
    bool any_mal = false;
    std::size_t n_ids = 0;
    for (auto j : members) {
      earliest = std::min(earliest, epoch_seconds(input[j].ts));
      any_mal = any_mal || input[j].malicious;
      n_ids += input[j].source_event_ids.size();
    }
    CHECK(epoch_seconds(got.ts) == earliest);
    CHECK(got.malicious == any_mal);
    CHECK(got.source_event_ids.size() == n_ids);
  }
}

TEST_CASE("standardizer basics") {
  Activity a = typed(0), b = typed(0);
  a.features.assign(54, 0.0);
  b.features.assign(54, 0.0);
  a.features[7] = 1.0;
  b.features[7] = 3.0;
  auto stats = fit_standardizer({a, b});
  CHECK(stats.mean[7] == 2.0);
  CHECK(stats.stddev[7] == 1.0);
  auto out = apply_standardizer(stats, {a, b});
  CHECK(out[0].features[7] == -1.0);
  CHECK(out[1].features[7] == 1.0);
  CHECK(out[0].features[9] == 0.0);  // constant zero dimension stays zero
  CHECK_THROWS_AS(fit_standardizer({}), DataError);
}

TEST_CASE("standardizer normalizes a random matrix") {
  Rng rng(5150);
  std::vector<Activity> acts;
  for (int i = 0; i < 100; ++i) {
    Activity a = typed(1);
    for (int d = 0; d < 54; ++d)
      a.features[d] = rng.uniform_in(-5.0, 5.0) * (d + 1);
    acts.push_back(a);
  }
  auto stats = fit_standardizer(acts);
  auto out = apply_standardizer(stats, acts);
  for (int d = 0; d < 54; ++d) {
    double mean = 0.0;
    for (const auto& a : out) mean += a.features[d];
    mean /= 100.0;
    double var = 0.0;
    for (const auto& a : out) {
      double dev = a.features[d] - mean;
      var += dev * dev;
    }
    double stddev = std::sqrt(var / 100.0);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(stddev - 1.0) < 1e-6);
  }
}

TEST_CASE("session segmentation follows logon boundaries") {
  auto seq = [&](std::vector<int> types) {
    std::vector<Activity> acts;
    int minute = 0;
    for (int t : types)
      acts.push_back(make_activity("U1", {2010, 1, 4, 9, minute++, 0}, t,
                                   std::vector<double>(54, 0.0)));
    return acts;
  };
  auto s1 = sessionize(seq({0, 3, 1, 0, 1}), PrepConfig::SessionMode::kSession,
                       kTable);
  REQUIRE(s1.size() == 2);
  CHECK(s1[0].size() == 3);
  CHECK(s1[1].size() == 2);

  auto s2 = sessionize(seq({0, 3, 0, 1}), PrepConfig::SessionMode::kSession,
                       kTable);
  REQUIRE(s2.size() == 2);
  CHECK(s2[0].size() == 2);
  CHECK(s2[0][0].type_id == 0);
  CHECK(s2[0][1].type_id == 3);
  CHECK(s2[1].size() == 2);

  auto s3 = sessionize(seq({3, 2, 0, 1}), PrepConfig::SessionMode::kSession,
                       kTable);
  REQUIRE(s3.size() == 2);  // leading non-logon activities form a session
  CHECK(s3[0].size() == 2);

  auto s4 = sessionize(seq({0, 3, 3}), PrepConfig::SessionMode::kSession,
                       kTable);
  REQUIRE(s4.size() == 1);  // trailing open session closes at end of data
  CHECK(s4[0].size() == 3);
}

TEST_CASE("sessionization partitions the stream") {
  Rng rng(31337);
  std::vector<Activity> acts;
  int minute = 0;
  for (int i = 0; i < 200; ++i)
    acts.push_back(make_activity("U1",
                                 {2010, 1, 4 + minute / 1440,
                                  (minute / 60) % 24, minute % 60, 0},
                                 static_cast<int>(rng.below(8)),
                                 std::vector<double>(54, 0.0))),
        minute += static_cast<int>(rng.below(90));
  for (auto mode : {PrepConfig::SessionMode::kSession,
                    PrepConfig::SessionMode::kHourly}) {
    auto sessions = sessionize(acts, mode, kTable);
    std::vector<Activity> flattened;
    for (const auto& s : sessions)
      flattened.insert(flattened.end(), s.begin(), s.end());
    REQUIRE(flattened.size() == acts.size());
    for (std::size_t i = 0; i < acts.size(); ++i) {
      CHECK(flattened[i].code == acts[i].code);
      CHECK(epoch_seconds(flattened[i].ts) == epoch_seconds(acts[i].ts));
    }
  }
}

TEST_CASE("hourly grouping merges small hours forward") {
  std::vector<Activity> acts;
  for (int i = 0; i < 3; ++i)
    acts.push_back(make_activity("U1", {2010, 1, 4, 9, i, 0}, 3,
                                 std::vector<double>(54, 0.0)));
  for (int i = 0; i < 10; ++i)
    acts.push_back(make_activity("U1", {2010, 1, 4, 10, i, 0}, 3,
                                 std::vector<double>(54, 0.0)));
  auto sessions = sessionize(acts, PrepConfig::SessionMode::kHourly, kTable);
  REQUIRE(sessions.size() == 1);
  CHECK(sessions[0].size() == 13);
}

TEST_CASE("sub-session chunking and merging") {
  auto run = [&](int n) {
    std::vector<Activity> session;
    for (int i = 0; i < n; ++i)
      session.push_back(make_activity("U1", {2010, 1, 4, 9, 0, i % 60}, 3,
                                      std::vector<double>(54, 0.0)));
    std::vector<int> lengths;
    for (const auto& s : split_subsessions(session))
      lengths.push_back(static_cast<int>(s.activities.size()));
    return lengths;
  };
  CHECK(run(120) == std::vector<int>{50, 50, 20});
  CHECK(run(53) == std::vector<int>{53});
  CHECK(run(4) == std::vector<int>{4});
  CHECK(run(50) == std::vector<int>{50});
  CHECK(run(104) == std::vector<int>{50, 54});

  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 1 + static_cast<int>(rng.below(200));
    auto lengths = run(n);
    int total = std::accumulate(lengths.begin(), lengths.end(), 0);
    CHECK(total == n);
    for (int len : lengths)
      if (n >= 5) CHECK(len >= 5);
  }
}

TEST_CASE("masking walks every position") {
  auto sub = std::make_shared<SubSession>();
  sub->user = "U1";
  sub->session_id = "U1#0.0";
  for (int i = 0; i < 3; ++i) {
    Activity a = make_activity("U1", {2010, 1, 4, 9, i, 0}, i,
                               std::vector<double>(54, 0.0));
    a.malicious = i == 1;
    sub->activities.push_back(a);
  }
  auto masked = generate_masked(sub);
  REQUIRE(masked.size() == 3);
  for (int t = 0; t < 3; ++t) {
    CHECK(masked[t].mask_pos == t);
    CHECK(masked[t].true_code == sub->activities[t].code);
    CHECK(masked[t].abnormal == (t == 1));
    CHECK(masked[t].sub.get() == sub.get());
  }
  auto single = std::make_shared<SubSession>();
  single->activities.push_back(typed(0));
  CHECK(generate_masked(single).size() == 1);
}

TEST_CASE("masked sequence count equals activity count") {
  Rng rng(8088);
  std::vector<Activity> acts;
  int minute = 0;
  for (int i = 0; i < 300; ++i) {
    acts.push_back(make_activity("U1",
                                 {2010, 1, 4 + minute / 1440,
                                  (minute / 60) % 24, minute % 60, 0},
                                 static_cast<int>(rng.below(8)),
                                 std::vector<double>(54, 0.0)));
    minute += static_cast<int>(rng.below(30));
  }
  auto seqs = build_sequences(acts, kCfg, kTable);
  CHECK(seqs.size() == acts.size());
  std::set<std::string> session_ids;
  for (const auto& m : seqs) session_ids.insert(m.sub->session_id);
  for (const auto& id : session_ids) CHECK(id.substr(0, 3) == "U1#");
}

TEST_CASE("activity cache round-trips") {
  Rng rng(6502);
  std::vector<Activity> acts;
  for (int i = 0; i < 40; ++i) {
    Activity a = make_activity(i % 2 ? "U1" : "U2",
                               {2010, 1, 4, static_cast<int>(rng.below(24)),
                                static_cast<int>(rng.below(60)),
                                static_cast<int>(rng.below(60))},
                               static_cast<int>(rng.below(8)),
                               std::vector<double>(54, 0.0));
    for (int d = 0; d < 54; ++d) a.features[d] = rng.uniform_in(-10, 10);
    a.malicious = rng.bernoulli(0.1);
    a.source_event_ids = {"a" + std::to_string(i), "b" + std::to_string(i)};
    acts.push_back(a);
  }
  fs::path dir = fs::temp_directory_path() /
                 ("itd_prep_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::string path = (dir / "cache.bin").string();
  save_activities(path, acts, 54, kTable);
  auto loaded = load_activities(path, 54, kTable);
  REQUIRE(loaded.size() == acts.size());
  for (std::size_t i = 0; i < acts.size(); ++i) {
    CHECK(loaded[i].user == acts[i].user);
    CHECK(loaded[i].ts == acts[i].ts);
    CHECK(loaded[i].type_id == acts[i].type_id);
    CHECK(loaded[i].hour == acts[i].hour);
    CHECK(loaded[i].code == acts[i].code);
    CHECK(loaded[i].features == acts[i].features);
    CHECK(loaded[i].malicious == acts[i].malicious);
    CHECK(loaded[i].source_event_ids == acts[i].source_event_ids);
  }
  CHECK_THROWS_AS(load_activities(path, 50, kTable), DataError);
  TypeTable other = kTable;
  other.fold["x"] = "Http";
  CHECK_THROWS_AS(load_activities(path, 54, other), DataError);
  fs::remove_all(dir);
}
