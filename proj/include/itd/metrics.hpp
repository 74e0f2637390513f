#pragma once

#include <optional>
#include <string>
#include <vector>

#include "itd/model.hpp"

namespace itd::metrics {

struct ScoredSequence {
  std::string id;
  double y_m = 0.0;      // probability the model put on the true masked code
  bool abnormal = false;
  double anomaly_score() const { return 1.0 - y_m; }
};

struct DetectionConfig {
  double fpr_target = 0.05;
  std::optional<double> tau;  // fixed threshold; otherwise selected
  double dr_floor = 0.0;      // CI gate

  void validate() const;
};

struct RocPoint {
  double threshold = 0.0;  // flag when anomaly_score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct DetectionReport {
  std::optional<double> auc;
  double dr = 0.0;
  double fpr = 0.0;
  double tau = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<RocPoint> roc;
};

// y_m per sequence with frozen evaluation noise. ids, when given, must align
// with the sequence list; otherwise ids are positional.
std::vector<ScoredSequence> score(const model::ModelParams& params,
                                  const std::vector<model::SequenceInput>& seqs,
                                  std::uint64_t eval_seed,
                                  const std::vector<std::string>* ids = nullptr);

// Anomalous iff y_m < tau, strictly. tau is clamped into [0,1].
std::vector<char> flag(const std::vector<ScoredSequence>& scored, double tau);

// Largest candidate threshold in {0} + observed scores + {1} whose
// false-positive rate over the normal sequences stays within the target.
double select_threshold(const std::vector<ScoredSequence>& scored,
                        double fpr_target);

DetectionReport roc_and_auc(const std::vector<ScoredSequence>& scored,
                            double tau);

void emit_roc(const DetectionReport& report, const std::string& csv_path,
              const std::string& summary_path);

}  // namespace itd::metrics
