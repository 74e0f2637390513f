#include "itd/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <set>
#include <sstream>

#include "itd/csv.hpp"
#include "json.hpp"

namespace itd::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

static const char* kToolVersion = "itd 1.0.0";

void PipelineConfig::validate() const {
  if (prep.feature_dim != model.feature_dim)
    throw ConfigError("prep.feature_dim and model.feature_dim must agree");
  if (prep.max_subsession < prep.min_subsession)
    throw ConfigError("max_subsession must be >= min_subsession");
  if (prep.work_start < 0 || prep.work_end > 24 ||
      prep.work_start >= prep.work_end)
    throw ConfigError("working hours must satisfy 0 <= start < end <= 24");
  model.validate();
  train.validate();
  detect.validate();
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& scope) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key '" +
                        (scope.empty() ? it.key() : scope + "." + it.key()) +
                        "'");
}

template <typename T>
void pull(const json& obj, const char* key, T& field) {
  if (obj.contains(key)) {
    try {
      field = obj.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config key '") + key +
                        "' has the wrong type");
    }
  }
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["data_dir"] = cfg.data_dir;
  j["out_dir"] = cfg.out_dir;
  j["version_tag"] = cfg.version_tag;
  j["eval_seed"] = cfg.eval_seed;

  json cols = json::object();
  for (const auto& [kind, map] : cfg.columns) cols[kind] = map;
  j["columns"] = cols;
  j["fold"] = cfg.type_table.fold;

  j["prep"] = {
      {"feature_dim", cfg.prep.feature_dim},
      {"org_domain", cfg.prep.org_domain},
      {"flag_words", cfg.prep.flag_words},
      {"flag_domains", cfg.prep.flag_domains},
      {"session_mode",
       cfg.prep.session_mode == prep::PrepConfig::SessionMode::kSession
           ? "session"
           : "hourly"},
      {"max_subsession", cfg.prep.max_subsession},
      {"min_subsession", cfg.prep.min_subsession},
      {"work_start", cfg.prep.work_start},
      {"work_end", cfg.prep.work_end},
  };
  j["model"] = {
      {"feature_dim", cfg.model.feature_dim},
      {"d_emb", cfg.model.d_emb},
      {"d_gcn", cfg.model.d_gcn},
      {"n_gcn_layers", cfg.model.n_gcn_layers},
      {"d_attn", cfg.model.d_attn},
      {"n_heads", cfg.model.n_heads},
      {"d_lstm", cfg.model.d_lstm},
      {"n_lstm_layers", cfg.model.n_lstm_layers},
      {"n_codes", cfg.model.n_codes},
      {"temperature", cfg.model.temperature},
      {"epsilon", cfg.model.epsilon},
      {"hard_adjacency", cfg.model.hard_adjacency},
  };
  j["train"] = {
      {"learning_rate", cfg.train.learning_rate},
      {"beta1", cfg.train.beta1},
      {"beta2", cfg.train.beta2},
      {"adam_eps", cfg.train.adam_eps},
      {"epochs", cfg.train.epochs},
      {"batch_size", cfg.train.batch_size},
      {"oversample_ratio", cfg.train.oversample_ratio},
      {"val_fraction", cfg.train.val_fraction},
      {"seed", cfg.train.seed},
  };
  j["detect"] = {
      {"fpr_target", cfg.detect.fpr_target},
      {"tau", cfg.detect.tau ? json(*cfg.detect.tau) : json(nullptr)},
      {"dr_floor", cfg.detect.dr_floor},
  };
  j["synth"] = {
      {"n_users", cfg.synth.n_users},
      {"days", cfg.synth.days},
      {"seed", cfg.synth.seed},
      {"anomaly_rate", cfg.synth.anomaly_rate},
      {"signature", ingest::to_string(cfg.synth.anomaly_signature)},
      {"events_per_user_day", cfg.synth.events_per_user_day},
      {"org_domain", cfg.synth.org_domain},
      {"start_date", format_civil(cfg.synth.start_date, "%Y-%m-%d")},
  };
  return j;
}

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown(j,
                 {"data_dir", "out_dir", "version_tag", "eval_seed", "columns",
                  "fold", "prep", "model", "train", "detect", "synth"},
                 "");
  PipelineConfig cfg;
  pull(j, "data_dir", cfg.data_dir);
  pull(j, "out_dir", cfg.out_dir);
  pull(j, "version_tag", cfg.version_tag);
  pull(j, "eval_seed", cfg.eval_seed);

  if (j.contains("columns")) {
    const json& cols = j.at("columns");
    reject_unknown(cols, {"logon", "device", "file", "email", "http"},
                   "columns");
    for (auto it = cols.begin(); it != cols.end(); ++it)
      cfg.columns[it.key()] = it.value().get<ingest::ColumnMap>();
  }
  if (j.contains("fold"))
    for (auto it = j.at("fold").begin(); it != j.at("fold").end(); ++it)
      cfg.type_table.fold[it.key()] = it.value().get<std::string>();

  if (j.contains("prep")) {
    const json& p = j.at("prep");
    reject_unknown(p,
                   {"feature_dim", "org_domain", "flag_words", "flag_domains",
                    "session_mode", "max_subsession", "min_subsession",
                    "work_start", "work_end"},
                   "prep");
    pull(p, "feature_dim", cfg.prep.feature_dim);
    pull(p, "org_domain", cfg.prep.org_domain);
    pull(p, "flag_words", cfg.prep.flag_words);
    pull(p, "flag_domains", cfg.prep.flag_domains);
    pull(p, "max_subsession", cfg.prep.max_subsession);
    pull(p, "min_subsession", cfg.prep.min_subsession);
    pull(p, "work_start", cfg.prep.work_start);
    pull(p, "work_end", cfg.prep.work_end);
    if (p.contains("session_mode")) {
      std::string mode = p.at("session_mode").get<std::string>();
      if (mode == "session")
        cfg.prep.session_mode = prep::PrepConfig::SessionMode::kSession;
      else if (mode == "hourly")
        cfg.prep.session_mode = prep::PrepConfig::SessionMode::kHourly;
      else
        throw ConfigError("session_mode must be 'session' or 'hourly'");
    }
    cfg.model.feature_dim = cfg.prep.feature_dim;
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m,
                   {"feature_dim", "d_emb", "d_gcn", "n_gcn_layers", "d_attn",
                    "n_heads", "d_lstm", "n_lstm_layers", "n_codes",
                    "temperature", "epsilon", "hard_adjacency"},
                   "model");
    pull(m, "feature_dim", cfg.model.feature_dim);
    pull(m, "d_emb", cfg.model.d_emb);
    pull(m, "d_gcn", cfg.model.d_gcn);
    pull(m, "n_gcn_layers", cfg.model.n_gcn_layers);
    pull(m, "d_attn", cfg.model.d_attn);
    pull(m, "n_heads", cfg.model.n_heads);
    pull(m, "d_lstm", cfg.model.d_lstm);
    pull(m, "n_lstm_layers", cfg.model.n_lstm_layers);
    pull(m, "n_codes", cfg.model.n_codes);
    pull(m, "temperature", cfg.model.temperature);
    pull(m, "epsilon", cfg.model.epsilon);
    pull(m, "hard_adjacency", cfg.model.hard_adjacency);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t,
                   {"learning_rate", "beta1", "beta2", "adam_eps", "epochs",
                    "batch_size", "oversample_ratio", "val_fraction", "seed"},
                   "train");
    pull(t, "learning_rate", cfg.train.learning_rate);
    pull(t, "beta1", cfg.train.beta1);
    pull(t, "beta2", cfg.train.beta2);
    pull(t, "adam_eps", cfg.train.adam_eps);
    pull(t, "epochs", cfg.train.epochs);
    pull(t, "batch_size", cfg.train.batch_size);
    pull(t, "oversample_ratio", cfg.train.oversample_ratio);
    pull(t, "val_fraction", cfg.train.val_fraction);
    pull(t, "seed", cfg.train.seed);
  }
  if (j.contains("detect")) {
    const json& d = j.at("detect");
    reject_unknown(d, {"fpr_target", "tau", "dr_floor"}, "detect");
    pull(d, "fpr_target", cfg.detect.fpr_target);
    pull(d, "dr_floor", cfg.detect.dr_floor);
    if (d.contains("tau")) {
      if (d.at("tau").is_null())
        cfg.detect.tau.reset();
      else
        cfg.detect.tau = d.at("tau").get<double>();
    }
  }
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    reject_unknown(s,
                   {"n_users", "days", "seed", "anomaly_rate", "signature",
                    "events_per_user_day", "org_domain", "start_date"},
                   "synth");
    pull(s, "n_users", cfg.synth.n_users);
    pull(s, "days", cfg.synth.days);
    pull(s, "seed", cfg.synth.seed);
    pull(s, "anomaly_rate", cfg.synth.anomaly_rate);
    pull(s, "events_per_user_day", cfg.synth.events_per_user_day);
    pull(s, "org_domain", cfg.synth.org_domain);
    if (s.contains("signature"))
      cfg.synth.anomaly_signature =
          ingest::signature_from_string(s.at("signature").get<std::string>());
    if (s.contains("start_date")) {
      std::string date = s.at("start_date").get<std::string>();
      CivilTime t;
      if (!parse_civil(date, "%Y-%m-%d", t))
        throw ConfigError("synth.start_date must be YYYY-MM-DD, got '" + date +
                          "'");
      cfg.synth.start_date = t;
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

PipelineConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string config_to_json_text(const PipelineConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
  return fnv1a64(config_to_json_text(cfg));
}

PipelineConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ConfigError(path + ": not valid JSON: " + e.what());
    }
  }
  for (const std::string& kv : overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key.path=value: '" + kv + "'");
    std::string keypath = kv.substr(0, eq);
    std::string value = kv.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // bare strings need no quotes
    }
    json* node = &j;
    for (const std::string& part : split(keypath, '.')) {
      if (!node->is_object()) *node = json::object();
      node = &(*node)[part];
    }
    *node = parsed;
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// checkpoint io

static const char kCkptMagic[9] = "ITDCKPT1";

void save_checkpoint(const model::ModelParams& params, const std::string& path,
                     const std::string& extra_json) {
  json extra;
  try {
    extra = json::parse(extra_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint extra is not valid JSON: ") +
                      e.what());
  }
  json manifest;
  manifest["format"] = 1;
  const model::ModelConfig& c = params.cfg;
  manifest["model"] = {
      {"feature_dim", c.feature_dim},   {"d_emb", c.d_emb},
      {"d_gcn", c.d_gcn},               {"n_gcn_layers", c.n_gcn_layers},
      {"d_attn", c.d_attn},             {"n_heads", c.n_heads},
      {"d_lstm", c.d_lstm},             {"n_lstm_layers", c.n_lstm_layers},
      {"n_codes", c.n_codes},           {"temperature", c.temperature},
      {"epsilon", c.epsilon},           {"hard_adjacency", c.hard_adjacency},
  };
  json arrays = json::array();
  model::ModelParams& mutable_params = const_cast<model::ModelParams&>(params);
  mutable_params.for_each_array(
      [&](const std::string& name, double*, long rows, long cols) {
        arrays.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
      });
  manifest["arrays"] = arrays;
  manifest["extra"] = extra;

  std::ostringstream out;
  out.write(kCkptMagic, 8);
  std::string header = manifest.dump();
  write_u32le(out, static_cast<std::uint32_t>(header.size()));
  out << header;
  mutable_params.for_each_array(
      [&](const std::string&, double* d, long rows, long cols) {
        for (long k = 0; k < rows * cols; ++k)
          write_f32le(out, static_cast<float>(d[k]));
      });
  atomic_write_file(path, out.str());
}

model::ModelParams load_checkpoint(const std::string& path,
                                   std::string* extra_json) {
  std::string bytes = read_file(path);
  if (bytes.size() < 12 || bytes.compare(0, 8, kCkptMagic, 8) != 0)
    throw DataError(path + ": not a checkpoint file");
  std::istringstream in(bytes);
  in.seekg(8);
  std::uint32_t mlen = read_u32le(in);
  if (8 + 4 + static_cast<std::size_t>(mlen) > bytes.size())
    throw DataError(path + ": truncated checkpoint manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(12, mlen));
  } catch (const json::exception& e) {
    throw DataError(path + ": bad checkpoint manifest: " + e.what());
  }
  in.seekg(12 + static_cast<std::streamoff>(mlen));
  if (manifest.value("format", 0) != 1)
    throw DataError(path + ": unsupported checkpoint format");

  model::ModelConfig cfg;
  const json& m = manifest.at("model");
  cfg.feature_dim = m.at("feature_dim").get<int>();
  cfg.d_emb = m.at("d_emb").get<int>();
  cfg.d_gcn = m.at("d_gcn").get<int>();
  cfg.n_gcn_layers = m.at("n_gcn_layers").get<int>();
  cfg.d_attn = m.at("d_attn").get<int>();
  cfg.n_heads = m.at("n_heads").get<int>();
  cfg.d_lstm = m.at("d_lstm").get<int>();
  cfg.n_lstm_layers = m.at("n_lstm_layers").get<int>();
  cfg.n_codes = m.at("n_codes").get<int>();
  cfg.temperature = m.at("temperature").get<double>();
  cfg.epsilon = m.at("epsilon").get<double>();
  cfg.hard_adjacency = m.at("hard_adjacency").get<bool>();

  model::ModelParams params = model::ModelParams::init(cfg, 0);
  const json& arrays = manifest.at("arrays");
  std::size_t idx = 0;
  params.for_each_array([&](const std::string& name, double* d, long rows,
                            long cols) {
    if (idx >= arrays.size())
      throw DataError(path + ": checkpoint lists too few arrays");
    const json& entry = arrays.at(idx++);
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<long>() != rows ||
        entry.at("cols").get<long>() != cols)
      throw DataError(path + ": shape mismatch for array '" + name +
                      "' (checkpoint was written with a different config)");
    for (long k = 0; k < rows * cols; ++k)
      d[k] = static_cast<double>(read_f32le(in));
    if (!in) throw DataError(path + ": truncated parameter data");
  });
  if (idx != arrays.size())
    throw DataError(path + ": checkpoint lists extra arrays");
  if (static_cast<std::size_t>(in.tellg()) != bytes.size())
    throw DataError(path + ": trailing bytes after parameter data");
  if (extra_json) *extra_json = manifest.value("extra", json::object()).dump();
  return params;
}

// ---------------------------------------------------------------------------
// corpus assembly

namespace {

ingest::LogKind kind_of(const std::string& name) {
  if (name == "logon") return ingest::LogKind::kLogon;
  if (name == "device") return ingest::LogKind::kDevice;
  if (name == "file") return ingest::LogKind::kFile;
  if (name == "email") return ingest::LogKind::kEmail;
  return ingest::LogKind::kHttp;
}

}  // namespace

Corpus build_corpus(const std::string& data_dir, const PipelineConfig& cfg,
                    std::vector<ingest::RowError>* errors) {
  Corpus corpus;
  std::vector<ingest::RawEvent> events;
  std::vector<ingest::RowError> all_errors;
  for (const char* name : {"logon", "device", "file", "email", "http"}) {
    fs::path path = fs::path(data_dir) / (std::string(name) + ".csv");
    if (!fs::exists(path)) continue;
    ingest::LogKind kind = kind_of(name);
    ingest::ColumnMap columns = ingest::default_column_map(kind);
    auto it = cfg.columns.find(name);
    if (it != cfg.columns.end())
      for (const auto& [logical, header] : it->second)
        columns[logical] = header;
    ingest::ParseResult res = ingest::parse_log_file(path.string(), kind, columns);
    corpus.events_per_kind[name] = static_cast<long>(res.events.size());
    for (auto& e : res.events) events.push_back(std::move(e));
    for (auto& e : res.errors) all_errors.push_back(std::move(e));
  }
  if (corpus.events_per_kind.empty())
    throw DataError(data_dir +
                    ": no input files (expected logon.csv, device.csv, ...)");
  corpus.events = static_cast<long>(events.size());
  corpus.row_errors = static_cast<long>(all_errors.size());

  fs::path truth = fs::path(data_dir) / "truth.csv";
  if (fs::exists(truth)) {
    ingest::GroundTruth gt = ingest::load_ground_truth(
        truth.string(), ingest::GroundTruth::Mode::kIds);
    events = ingest::label_events(std::move(events), gt);
  }
  for (const auto& e : events)
    if (e.malicious) ++corpus.malicious_events;

  fs::path context_path = fs::path(data_dir) / "context.csv";
  if (!fs::exists(context_path))
    throw DataError(data_dir +
                    ": context.csv not found (user,assigned_pc,supervisor_pc)");
  prep::ContextMap context = prep::load_context(context_path.string());

  prep::FeatureLayout layout;
  layout.dim = cfg.prep.feature_dim;
  std::vector<prep::Activity> raw;
  raw.reserve(events.size());
  for (const auto& e : events)
    raw.push_back(
        prep::to_activity(e, context, cfg.type_table, layout, cfg.prep));
  corpus.raw_activities = static_cast<long>(raw.size());

  std::vector<prep::Activity> aggregated = prep::aggregate_hourly(raw, layout);
  corpus.stats = prep::fit_standardizer(aggregated);
  corpus.activities =
      prep::apply_standardizer(corpus.stats, std::move(aggregated));
  if (errors) *errors = std::move(all_errors);
  return corpus;
}

SequenceSet build_sequence_set(const std::vector<prep::Activity>& activities,
                               const PipelineConfig& cfg) {
  // group by user, preserving first-seen order
  std::vector<std::string> user_order;
  std::map<std::string, std::vector<prep::Activity>> by_user;
  for (const auto& a : activities) {
    if (!by_user.count(a.user)) user_order.push_back(a.user);
    by_user[a.user].push_back(a);
  }
  SequenceSet set;
  for (const std::string& user : user_order) {
    auto masked =
        prep::build_sequences(by_user[user], cfg.prep, cfg.type_table);
    for (const auto& seq : masked) {
      set.inputs.push_back(model::to_input(seq));
      set.ids.push_back(seq.sub->session_id + "@" +
                        std::to_string(seq.mask_pos));
      set.users.push_back(user);
      if (seq.abnormal) ++set.n_abnormal;
    }
  }
  std::set<std::string> subsessions;
  for (const auto& id : set.ids)
    subsessions.insert(id.substr(0, id.find('@')));
  set.n_subsessions = static_cast<long>(subsessions.size());
  return set;
}

// ---------------------------------------------------------------------------
// commands

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  long ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
  }
};

char hex_digit(int v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

std::string hex64(std::uint64_t v) {
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = hex_digit(static_cast<int>(v & 0xf));
  return s;
}

void write_manifest(const PipelineConfig& cfg, const std::string& command,
                    const json& extra, long elapsed_ms) {
  json man;
  man["command"] = command;
  man["tool_version"] = kToolVersion;
  man["config_hash"] = hex64(config_hash(cfg));
  man["config"] = json::parse(config_to_json_text(cfg));
  man["elapsed_ms"] = elapsed_ms;
  for (auto it = extra.begin(); it != extra.end(); ++it) man[it.key()] = it.value();
  fs::create_directories(cfg.out_dir);
  atomic_write_file(
      (fs::path(cfg.out_dir) / (command + "_manifest.json")).string(),
      man.dump(2) + "\n");
}

json stats_to_json(const prep::StandardizerStats& stats) {
  return {{"mean", stats.mean}, {"stddev", stats.stddev}};
}

prep::StandardizerStats stats_from_json(const json& j) {
  prep::StandardizerStats stats;
  stats.mean = j.at("mean").get<std::vector<double>>();
  stats.stddev = j.at("stddev").get<std::vector<double>>();
  return stats;
}

}  // namespace

int cmd_synth(const PipelineConfig& cfg, std::ostream& out) {
  Stopwatch watch;
  fs::path dir = fs::path(cfg.out_dir) / "dataset";
  fs::create_directories(dir);
  ingest::SyntheticOutput result =
      ingest::generate_synthetic(cfg.synth, dir.string());
  json files = json::object();
  for (const auto& [label, path] : result.files) {
    files[label] = path;
    out << path << "\n";
  }
  json hashes = json::object();
  for (const auto& [label, path] : result.files)
    hashes[label] = hex64(fnv1a64(read_file(path)));
  write_manifest(cfg, "synth",
                 {{"files", files},
                  {"file_hashes", hashes},
                  {"total_events", result.total_events},
                  {"malicious_events", result.malicious_events}},
                 watch.ms());
  out << "events=" << result.total_events
      << " malicious=" << result.malicious_events << "\n";
  return 0;
}

int cmd_prepare(const PipelineConfig& cfg, std::ostream& out) {
  Stopwatch watch;
  std::vector<ingest::RowError> errors;
  Corpus corpus = build_corpus(cfg.data_dir, cfg, &errors);
  fs::create_directories(cfg.out_dir);
  if (!errors.empty())
    ingest::write_error_report(
        (fs::path(cfg.out_dir) / "row_errors.csv").string(), errors);

  std::string cache = (fs::path(cfg.out_dir) / "corpus.bin").string();
  prep::save_activities(cache, corpus.activities, cfg.prep.feature_dim,
                        cfg.type_table);
  atomic_write_file((fs::path(cfg.out_dir) / "standardizer.json").string(),
                    stats_to_json(corpus.stats).dump(2) + "\n");

  SequenceSet set = build_sequence_set(corpus.activities, cfg);
  long normal = static_cast<long>(set.inputs.size()) - set.n_abnormal;
  json stats = {
      {"events_per_kind", corpus.events_per_kind},
      {"events", corpus.events},
      {"row_errors", corpus.row_errors},
      {"malicious_events", corpus.malicious_events},
      {"activities", corpus.raw_activities},
      {"aggregated_activities", static_cast<long>(corpus.activities.size())},
      {"subsessions", set.n_subsessions},
      {"masked_sequences", static_cast<long>(set.inputs.size())},
      {"abnormal_sequences", set.n_abnormal},
      {"imbalance_ratio",
       set.n_abnormal > 0 ? train::compute_ratio(normal, set.n_abnormal) : 0},
  };
  atomic_write_file((fs::path(cfg.out_dir) / "prepare_stats.json").string(),
                    stats.dump(2) + "\n");
  write_manifest(cfg, "prepare",
                 {{"stats", stats},
                  {"corpus", cache},
                  {"corpus_hash", hex64(fnv1a64(read_file(cache)))}},
                 watch.ms());
  out << "corpus=" << cache << " activities=" << corpus.activities.size()
      << " masked=" << set.inputs.size() << " abnormal=" << set.n_abnormal
      << "\n";
  return 0;
}

int cmd_train(const PipelineConfig& cfg, std::ostream& out) {
  Stopwatch watch;
  std::string cache = (fs::path(cfg.out_dir) / "corpus.bin").string();
  std::vector<prep::Activity> activities =
      prep::load_activities(cache, cfg.prep.feature_dim, cfg.type_table);
  SequenceSet set = build_sequence_set(activities, cfg);
  if (set.inputs.empty()) throw DataError("prepared corpus has no sequences");

  train::FitResult fit = train::fit(
      set.inputs, cfg.model, cfg.train,
      [&](int epoch, int step, double loss) {
        if (step == 0) out << epoch << "," << step << "," << loss << "\n";
      });

  json history = json::array();
  for (const auto& h : fit.history)
    history.push_back({{"epoch", h.epoch},
                       {"train_loss", h.train_loss},
                       {"val_loss", h.val_loss}});
  std::string std_path = (fs::path(cfg.out_dir) / "standardizer.json").string();
  json extra = {
      {"standardizer", json::parse(read_file(std_path))},
      {"best_epoch", fit.best_epoch},
      {"best_val_loss", fit.best_val_loss},
      {"oversample_ratio", fit.ratio_used},
      {"corpus_hash", hex64(fnv1a64(read_file(cache)))},
      {"seed", cfg.train.seed},
  };
  std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  save_checkpoint(fit.params, ckpt, extra.dump());
  write_manifest(cfg, "train",
                 {{"checkpoint", ckpt},
                  {"history", history},
                  {"best_epoch", fit.best_epoch},
                  {"best_val_loss", fit.best_val_loss},
                  {"oversample_ratio", fit.ratio_used},
                  {"sequences", static_cast<long>(set.inputs.size())}},
                 watch.ms());
  out << "checkpoint=" << ckpt << " best_epoch=" << fit.best_epoch
      << " best_val_loss=" << fit.best_val_loss << "\n";
  return 0;
}

int cmd_eval(const PipelineConfig& cfg, const std::string& checkpoint_path,
             std::ostream& out) {
  Stopwatch watch;
  model::ModelParams params = load_checkpoint(checkpoint_path);
  if (params.cfg.feature_dim != cfg.prep.feature_dim)
    throw DataError("checkpoint feature_dim " +
                    std::to_string(params.cfg.feature_dim) +
                    " does not match configured " +
                    std::to_string(cfg.prep.feature_dim));
  std::string cache = (fs::path(cfg.out_dir) / "corpus.bin").string();
  std::vector<prep::Activity> activities =
      prep::load_activities(cache, cfg.prep.feature_dim, cfg.type_table);
  SequenceSet set = build_sequence_set(activities, cfg);

  auto scored = metrics::score(params, set.inputs, cfg.eval_seed, &set.ids);
  double tau = cfg.detect.tau ? *cfg.detect.tau
                              : metrics::select_threshold(
                                    scored, cfg.detect.fpr_target);
  metrics::DetectionReport report = metrics::roc_and_auc(scored, tau);
  std::string roc = (fs::path(cfg.out_dir) / "roc.csv").string();
  std::string summary = (fs::path(cfg.out_dir) / "report.json").string();
  metrics::emit_roc(report, roc, summary);
  write_manifest(cfg, "eval",
                 {{"checkpoint", checkpoint_path},
                  {"roc", roc},
                  {"report", summary},
                  {"tau", tau},
                  {"tau_source", cfg.detect.tau ? "config" : "selected"},
                  {"sequences", static_cast<long>(set.inputs.size())}},
                 watch.ms());
  out << "auc=" << (report.auc ? std::to_string(*report.auc) : "n/a")
      << " dr=" << report.dr << " fpr=" << report.fpr << " tau=" << tau
      << "\n";
  return report.dr < cfg.detect.dr_floor ? 4 : 0;
}

int cmd_detect(const PipelineConfig& cfg, const std::string& checkpoint_path,
               const std::string& logs_dir, std::ostream& out) {
  Stopwatch watch;
  if (!cfg.detect.tau)
    throw ConfigError("detect needs a threshold: set detect.tau");
  std::string extra_text;
  model::ModelParams params = load_checkpoint(checkpoint_path, &extra_text);
  json extra = json::parse(extra_text);
  if (!extra.contains("standardizer"))
    throw DataError(checkpoint_path +
                    ": checkpoint carries no standardizer statistics");
  prep::StandardizerStats stats = stats_from_json(extra.at("standardizer"));

  PipelineConfig parse_cfg = cfg;
  parse_cfg.data_dir = logs_dir;
  std::vector<ingest::RowError> errors;
  // rebuild activities but standardize with the training-time statistics
  fs::path context_path = fs::path(logs_dir) / "context.csv";
  if (!fs::exists(context_path))
    throw DataError(logs_dir + ": context.csv not found");
  prep::ContextMap context = prep::load_context(context_path.string());
  prep::FeatureLayout layout;
  layout.dim = cfg.prep.feature_dim;

  std::vector<ingest::RawEvent> events;
  for (const char* name : {"logon", "device", "file", "email", "http"}) {
    fs::path path = fs::path(logs_dir) / (std::string(name) + ".csv");
    if (!fs::exists(path)) continue;
    ingest::LogKind kind = kind_of(name);
    ingest::ColumnMap columns = ingest::default_column_map(kind);
    auto it = cfg.columns.find(name);
    if (it != cfg.columns.end())
      for (const auto& [logical, header] : it->second)
        columns[logical] = header;
    auto res = ingest::parse_log_file(path.string(), kind, columns);
    for (auto& e : res.events) events.push_back(std::move(e));
    for (auto& e : res.errors) errors.push_back(std::move(e));
  }
  if (events.empty()) throw DataError(logs_dir + ": no events parsed");

  std::vector<prep::Activity> raw;
  for (const auto& e : events)
    raw.push_back(
        prep::to_activity(e, context, cfg.type_table, layout, cfg.prep));
  std::vector<prep::Activity> activities = prep::apply_standardizer(
      stats, prep::aggregate_hourly(raw, layout));
  SequenceSet set = build_sequence_set(activities, cfg);

  auto scored = metrics::score(params, set.inputs, cfg.eval_seed, &set.ids);
  auto flags = metrics::flag(scored, *cfg.detect.tau);

  std::ostringstream csv;
  csv << "id,user,y_m,anomaly_score\n";
  long flagged = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (!flags[i]) continue;
    ++flagged;
    csv << csv_escape(scored[i].id) << ',' << csv_escape(set.users[i]) << ','
        << scored[i].y_m << ',' << scored[i].anomaly_score() << "\n";
  }
  fs::create_directories(cfg.out_dir);
  std::string flagged_path = (fs::path(cfg.out_dir) / "flagged.csv").string();
  atomic_write_file(flagged_path, csv.str());
  write_manifest(cfg, "detect",
                 {{"checkpoint", checkpoint_path},
                  {"logs", logs_dir},
                  {"flagged", flagged_path},
                  {"tau", *cfg.detect.tau},
                  {"sequences", static_cast<long>(set.inputs.size())},
                  {"flagged_count", flagged},
                  {"row_errors", static_cast<long>(errors.size())}},
                 watch.ms());
  out << "flagged=" << flagged << "/" << set.inputs.size() << " -> "
      << flagged_path << "\n";
  return 0;
}

}  // namespace itd::pipeline
