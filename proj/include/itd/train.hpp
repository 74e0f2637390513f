#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "itd/model.hpp"

namespace itd::train {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 20;
  int batch_size = 64;
  long oversample_ratio = 0;  // 0 selects the imbalance ratio automatically
  double val_fraction = 0.1;
  std::uint64_t seed = 42;

  void validate() const;
};

// Per-sequence target distributions. Normal rows stay one-hot; abnormal rows
// spread 1/(M-1) over every code except the true one.
struct SoftLabelBatch {
  MatrixXd Y;            // one-hot rows
  MatrixXd Yp;           // training targets
  std::vector<char> q;   // abnormal flags
};

SoftLabelBatch build_soft_labels(const std::vector<int>& true_codes,
                                 const std::vector<char>& abnormal, int M);

// floor(n_normal / n_abnormal), never below 1.
long compute_ratio(long n_normal, long n_abnormal);

// Abnormal sequences appear ratio times, normal once; order shuffled by seed.
std::vector<model::SequenceInput> oversample(
    const std::vector<model::SequenceInput>& seqs, long ratio,
    std::uint64_t seed);

// Mean over sequences of -(1/max(n_i-1,1)) * sum_j Yp_ij log(max(y_ij,1e-12)).
double soft_label_loss(const std::vector<VectorXd>& y_pred,
                       const SoftLabelBatch& labels,
                       const std::vector<int>& n_per_sequence);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FitResult {
  model::ModelParams params;  // best-validation checkpoint
  std::vector<EpochStats> history;
  double best_val_loss = 0.0;
  int best_epoch = -1;
  long ratio_used = 1;
};

using ProgressFn = std::function<void(int epoch, int step, double loss)>;

FitResult fit(const std::vector<model::SequenceInput>& corpus,
              const model::ModelConfig& mcfg, const TrainConfig& tcfg,
              const ProgressFn& progress = nullptr);

}  // namespace itd::train
