#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "itd/ingest.hpp"

namespace itd::prep {

inline constexpr int knTypes = 8;
inline constexpr int kHoursPerDay = 24;
inline constexpr int knCodes = knTypes * kHoursPerDay;  // 192

// Fixed verb->id table plus a fold map for verbs that are variants of the
// canonical eight (File Copy, http verbs, ...).
struct TypeTable {
  std::map<std::string, int> canonical;
  std::map<std::string, std::string> fold;

  static TypeTable defaults();
  // Resolves a verb through the fold map; unknown verbs are a DataError.
  int id_of(const std::string& verb) const;
  const std::string& name_of(int id) const;
  std::uint64_t hash() const;
};

struct FeatureLayout {
  // shared block
  static constexpr int kSupervisorPc = 0;
  static constexpr int kAssignedPc = 1;
  static constexpr int kAfterHours = 2;
  static constexpr int kWeekend = 3;
  // file block: removable flags, verb bits, extension class bits, flag words
  static constexpr int kFileToRemovable = 4;
  static constexpr int kFileFromRemovable = 5;
  static constexpr int kFileOpen = 6;
  static constexpr int kFileWrite = 7;
  static constexpr int kFileDelete = 8;
  static constexpr int kFileCopy = 9;
  static constexpr int kFileClassBase = 10;  // 6 extension classes
  static constexpr int kFileFlagWords = 16;
  // device block
  static constexpr int kDeviceConnect = 17;
  static constexpr int kDeviceDisconnect = 18;
  // email block: recipient counts in/out, attachment size per class, flags
  static constexpr int kEmailToOut = 19;
  static constexpr int kEmailToIn = 20;
  static constexpr int kEmailBccOut = 21;
  static constexpr int kEmailBccIn = 22;
  static constexpr int kEmailCcOut = 23;
  static constexpr int kEmailCcIn = 24;
  static constexpr int kEmailSizeBase = 25;  // 6 extension classes
  static constexpr int kEmailFlagWords = 31;
  // http block
  static constexpr int kHttpFlagUrl = 32;
  static constexpr int kHttpFlagWords = 33;
  static constexpr int kHttpVisit = 34;
  static constexpr int kHttpDownload = 35;
  static constexpr int kHttpUpload = 36;
  static constexpr int kOneHotBase = 37;  // 8 type slots
  static constexpr int kUsed = 45;        // remainder is zero padding

  int dim = 54;

  // Binary dimensions aggregate by max, the rest by mean.
  bool is_binary(int index) const;
};

// Extension classes for filenames and attachments.
enum class ExtClass {
  kCompressed = 0,
  kImage = 1,
  kDocument = 2,
  kText = 3,
  kExecutable = 4,
  kOther = 5
};
ExtClass ext_class(const std::string& filename);

struct PrepConfig {
  int feature_dim = 54;
  std::string org_domain = "dtaa.com";
  std::vector<std::string> flag_words = {"jobs", "key-logging", "key log"};
  std::vector<std::string> flag_domains = {"wikileaks.org", "dropbox.com"};
  enum class SessionMode { kSession, kHourly };
  SessionMode session_mode = SessionMode::kSession;
  int max_subsession = 50;
  int min_subsession = 5;
  int work_start = 9;   // working hours window for the after-hours feature
  int work_end = 17;
};

struct UserContext {
  std::string assigned_pc;
  std::string supervisor_pc;
};
using ContextMap = std::map<std::string, UserContext>;

// Loads user,assigned_pc,supervisor_pc rows.
ContextMap load_context(const std::string& path);

struct Activity {
  std::string user;
  CivilTime ts;
  int type_id = 0;
  int hour = 0;
  int code = 0;
  std::vector<double> features;
  bool malicious = false;
  std::vector<std::string> source_event_ids;
};

int encode_code(int type_id, int hour);

// Verb the type table sees for this event (email rows carry no verb).
std::string type_verb(const ingest::RawEvent& event);

std::vector<double> extract_features(const ingest::RawEvent& event,
                                     const ContextMap& context,
                                     const TypeTable& table,
                                     const FeatureLayout& layout,
                                     const PrepConfig& cfg);

Activity to_activity(const ingest::RawEvent& event, const ContextMap& context,
                     const TypeTable& table, const FeatureLayout& layout,
                     const PrepConfig& cfg);

// Collapses activities sharing (user, date, code): binary dims by max, the
// rest by mean; earliest timestamp; OR of flags; concatenated source ids.
std::vector<Activity> aggregate_hourly(const std::vector<Activity>& input,
                                       const FeatureLayout& layout);

struct StandardizerStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-8
};

StandardizerStats fit_standardizer(const std::vector<Activity>& train);
std::vector<Activity> apply_standardizer(const StandardizerStats& stats,
                                         std::vector<Activity> input);

std::vector<std::vector<Activity>> sessionize(
    const std::vector<Activity>& user_activities, PrepConfig::SessionMode mode,
    const TypeTable& table);

struct SubSession {
  std::vector<Activity> activities;
  std::string session_id;
  std::string user;
};

std::vector<SubSession> split_subsessions(const std::vector<Activity>& session,
                                          int max_len = 50, int min_len = 5);

struct MaskedSequence {
  std::shared_ptr<const SubSession> sub;
  int mask_pos = 0;
  int true_code = 0;
  bool abnormal = false;

  int length() const { return static_cast<int>(sub->activities.size()); }
};

std::vector<MaskedSequence> generate_masked(
    std::shared_ptr<const SubSession> sub);

// Full per-user chain: sessionize, split, mask. Session ids are
// "user#session.chunk" in stream order.
std::vector<MaskedSequence> build_sequences(
    const std::vector<Activity>& user_activities, const PrepConfig& cfg,
    const TypeTable& table);

// Columnar activity cache (little-endian, versioned).
void save_activities(const std::string& path,
                     const std::vector<Activity>& activities, int feature_dim,
                     const TypeTable& table);
std::vector<Activity> load_activities(const std::string& path,
                                      int expect_feature_dim,
                                      const TypeTable& expect_table);

}  // namespace itd::prep
