#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "itd/ingest.hpp"
#include "itd/metrics.hpp"
#include "itd/preprocess.hpp"
#include "itd/train.hpp"

namespace itd::pipeline {

struct PipelineConfig {
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string version_tag = "synthetic";
  std::map<std::string, ingest::ColumnMap> columns;  // per-kind overrides
  prep::TypeTable type_table = prep::TypeTable::defaults();
  prep::PrepConfig prep;
  model::ModelConfig model;
  train::TrainConfig train;
  metrics::DetectionConfig detect;
  ingest::SyntheticConfig synth;
  std::uint64_t eval_seed = 777;

  void validate() const;
};

// Defaults, overlaid with the JSON file (when non-empty), overlaid with
// key.path=value pairs. Unknown keys are configuration errors.
PipelineConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});
PipelineConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const PipelineConfig& cfg);
std::uint64_t config_hash(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// checkpoints: magic, JSON manifest (model config, array shapes, extra
// metadata), then each parameter array as little-endian f32 in visitor order.

void save_checkpoint(const model::ModelParams& params, const std::string& path,
                     const std::string& extra_json = "{}");
model::ModelParams load_checkpoint(const std::string& path,
                                   std::string* extra_json = nullptr);

// ---------------------------------------------------------------------------

struct Corpus {
  std::vector<prep::Activity> activities;  // aggregated, standardized
  prep::StandardizerStats stats;
  std::map<std::string, long> events_per_kind;
  long events = 0;
  long row_errors = 0;
  long raw_activities = 0;
  long malicious_events = 0;
};

Corpus build_corpus(const std::string& data_dir, const PipelineConfig& cfg,
                    std::vector<ingest::RowError>* errors = nullptr);

struct SequenceSet {
  std::vector<model::SequenceInput> inputs;
  std::vector<std::string> ids;  // "user#session.chunk@mask"
  std::vector<std::string> users;
  long n_abnormal = 0;
  long n_subsessions = 0;
};

SequenceSet build_sequence_set(const std::vector<prep::Activity>& activities,
                               const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// commands; each returns a process exit code and writes artifacts + a
// manifest under cfg.out_dir only.

int cmd_synth(const PipelineConfig& cfg, std::ostream& out);
int cmd_prepare(const PipelineConfig& cfg, std::ostream& out);
int cmd_train(const PipelineConfig& cfg, std::ostream& out);
int cmd_eval(const PipelineConfig& cfg, const std::string& checkpoint_path,
             std::ostream& out);
int cmd_detect(const PipelineConfig& cfg, const std::string& checkpoint_path,
               const std::string& logs_dir, std::ostream& out);

}  // namespace itd::pipeline
