#include "itd/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace itd::train {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
    throw ConfigError("adam betas must lie in (0,1)");
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (oversample_ratio < 0)
    throw ConfigError("oversample_ratio must be >= 1 (or 0 for automatic)");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("val_fraction must lie in [0,1)");
}

SoftLabelBatch build_soft_labels(const std::vector<int>& true_codes,
                                 const std::vector<char>& abnormal, int M) {
  if (true_codes.size() != abnormal.size())
    throw DataError("codes and flags differ in length");
  if (M < 2) throw ConfigError("need at least two codes");
  long n = static_cast<long>(true_codes.size());
  SoftLabelBatch batch;
  batch.Y = MatrixXd::Zero(n, M);
  batch.Yp = MatrixXd::Zero(n, M);
  batch.q = abnormal;
  double off = 1.0 / static_cast<double>(M - 1);
  for (long i = 0; i < n; ++i) {
    int c = true_codes[static_cast<std::size_t>(i)];
    if (c < 0 || c >= M) throw DataError("code out of range");
    batch.Y(i, c) = 1.0;
    if (abnormal[static_cast<std::size_t>(i)]) {
      batch.Yp.row(i).setConstant(off);
      batch.Yp(i, c) = 0.0;
    } else {
      batch.Yp(i, c) = 1.0;
    }
  }
  return batch;
}

long compute_ratio(long n_normal, long n_abnormal) {
  if (n_abnormal < 1) throw DataError("no abnormal sequences to oversample");
  return std::max(1L, n_normal / n_abnormal);
}

std::vector<model::SequenceInput> oversample(
    const std::vector<model::SequenceInput>& seqs, long ratio,
    std::uint64_t seed) {
  if (ratio < 1) throw ConfigError("oversample ratio must be >= 1");
  std::vector<model::SequenceInput> out;
  for (const auto& s : seqs) {
    long copies = s.abnormal ? ratio : 1;
    for (long k = 0; k < copies; ++k) out.push_back(s);
  }
  Rng rng(seed);
  rng.shuffle(out);
  return out;
}

double soft_label_loss(const std::vector<VectorXd>& y_pred,
                       const SoftLabelBatch& labels,
                       const std::vector<int>& n_per_sequence) {
  long n = static_cast<long>(y_pred.size());
  if (n != labels.Yp.rows() ||
      n != static_cast<long>(n_per_sequence.size()))
    throw DataError("prediction, label, and length counts differ");
  if (n == 0) return 0.0;
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    const VectorXd& y = y_pred[static_cast<std::size_t>(i)];
    if (y.size() != labels.Yp.cols())
      throw DataError("prediction width differs from labels");
    double divisor = std::max(n_per_sequence[static_cast<std::size_t>(i)] - 1, 1);
    double acc = 0.0;
    for (long j = 0; j < y.size(); ++j) {
      double w = labels.Yp(i, j);
      if (w != 0.0) acc += w * std::log(std::max(y(j), 1e-12));
    }
    total += -acc / divisor;
  }
  return total / static_cast<double>(n);
}

namespace {

struct AdamState {
  model::ModelParams m, v;
  long t = 0;
};

struct FlatView {
  std::vector<double*> ptr;
  std::vector<long> len;
};

FlatView flatten(model::ModelParams& p) {
  FlatView view;
  p.for_each_array([&](const std::string&, double* d, long r, long c) {
    view.ptr.push_back(d);
    view.len.push_back(r * c);
  });
  return view;
}

void adam_step(model::ModelParams& params, model::ModelParams& grads,
               AdamState& state, const TrainConfig& cfg) {
  ++state.t;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  FlatView p = flatten(params), g = flatten(grads), m = flatten(state.m),
           v = flatten(state.v);
  for (std::size_t a = 0; a < p.ptr.size(); ++a) {
    for (long k = 0; k < p.len[a]; ++k) {
      double gk = g.ptr[a][k];
      double mk = m.ptr[a][k] = cfg.beta1 * m.ptr[a][k] + (1.0 - cfg.beta1) * gk;
      double vk = v.ptr[a][k] = cfg.beta2 * v.ptr[a][k] + (1.0 - cfg.beta2) * gk * gk;
      p.ptr[a][k] -= cfg.learning_rate * (mk / bc1) /
                     (std::sqrt(vk / bc2) + cfg.adam_eps);
    }
  }
}

// d(loss)/d(logits) for one sequence under the soft-label loss with the
// probability clamp: entries already below the clamp contribute no log grad.
VectorXd loss_dlogits(const VectorXd& y, const VectorXd& target, double divisor,
                      double batch_scale) {
  double active_mass = 0.0;
  VectorXd d = VectorXd::Zero(y.size());
  for (long j = 0; j < y.size(); ++j) {
    if (target(j) != 0.0 && y(j) > 1e-12) {
      active_mass += target(j);
      d(j) -= target(j);
    }
  }
  d += active_mass * y;
  return d * (batch_scale / divisor);
}

}  // namespace

FitResult fit(const std::vector<model::SequenceInput>& corpus,
              const model::ModelConfig& mcfg, const TrainConfig& tcfg,
              const ProgressFn& progress) {
  mcfg.validate();
  tcfg.validate();
  if (corpus.empty()) throw DataError("empty training corpus");

  FitResult result;
  result.params = model::ModelParams::init(mcfg, tcfg.seed);
  if (tcfg.epochs == 0) return result;

  // stratified validation split
  Rng split_rng(mix64(tcfg.seed, 0x5117));
  std::vector<std::size_t> norm_idx, abn_idx;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (corpus[i].abnormal ? abn_idx : norm_idx).push_back(i);
  split_rng.shuffle(norm_idx);
  split_rng.shuffle(abn_idx);
  auto take = [&](std::vector<std::size_t>& pool, std::size_t want,
                  std::vector<model::SequenceInput>& val,
                  std::vector<model::SequenceInput>& train) {
    for (std::size_t k = 0; k < pool.size(); ++k)
      (k < want ? val : train).push_back(corpus[pool[k]]);
  };
  std::vector<model::SequenceInput> train_set, val_set;
  std::size_t val_norm =
      static_cast<std::size_t>(tcfg.val_fraction * norm_idx.size());
  std::size_t val_abn =
      static_cast<std::size_t>(tcfg.val_fraction * abn_idx.size());
  // hold at least one abnormal out when it would not starve training
  if (val_abn == 0 && abn_idx.size() >= 2 && tcfg.val_fraction > 0.0)
    val_abn = 1;
  take(norm_idx, val_norm, val_set, train_set);
  take(abn_idx, val_abn, val_set, train_set);
  if (train_set.empty()) throw DataError("validation split leaves no training data");

  long train_abn = static_cast<long>(
      std::count_if(train_set.begin(), train_set.end(),
                    [](const model::SequenceInput& s) { return s.abnormal; }));
  long train_norm = static_cast<long>(train_set.size()) - train_abn;
  result.ratio_used =
      tcfg.oversample_ratio > 0
          ? tcfg.oversample_ratio
          : (train_abn > 0 ? compute_ratio(train_norm, train_abn) : 1);
  std::vector<model::SequenceInput> training =
      oversample(train_set, result.ratio_used, mix64(tcfg.seed, 0xa6));

  // frozen validation targets
  SoftLabelBatch val_labels;
  std::vector<int> val_lengths;
  if (!val_set.empty()) {
    std::vector<int> codes;
    std::vector<char> flags;
    for (const auto& s : val_set) {
      codes.push_back(s.true_code);
      flags.push_back(s.abnormal ? 1 : 0);
      val_lengths.push_back(static_cast<int>(s.features.rows()));
    }
    val_labels = build_soft_labels(codes, flags, mcfg.n_codes);
  }
  const std::uint64_t val_noise_seed = mix64(tcfg.seed, 0xe7a1);

  AdamState adam;
  adam.m = model::ModelParams::zeros_like(result.params);
  adam.v = model::ModelParams::zeros_like(result.params);
  model::ModelParams best = result.params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  Rng order_rng(mix64(tcfg.seed, 0x0d3));
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    long steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      std::size_t bsz = stop - start;
      std::uint64_t noise_seed =
          mix64(tcfg.seed, static_cast<std::uint64_t>(epoch),
                static_cast<std::uint64_t>(steps));

      model::ModelParams grads = model::ModelParams::zeros_like(result.params);
      std::vector<int> codes;
      std::vector<char> flags;
      std::vector<int> lengths;
      std::vector<VectorXd> preds;
      std::vector<model::ForwardTrace> traces(bsz);
      for (std::size_t k = 0; k < bsz; ++k) {
        const auto& seq = training[order[start + k]];
        preds.push_back(model::forward_sequence(result.params, seq, noise_seed,
                                                model::NoiseMode::kGumbel,
                                                &traces[k]));
        codes.push_back(seq.true_code);
        flags.push_back(seq.abnormal ? 1 : 0);
        lengths.push_back(static_cast<int>(seq.features.rows()));
      }
      SoftLabelBatch labels = build_soft_labels(codes, flags, mcfg.n_codes);
      double loss = soft_label_loss(preds, labels, lengths);
      if (!std::isfinite(loss))
        throw DataError("non-finite loss at epoch " + std::to_string(epoch) +
                        " step " + std::to_string(steps));
      for (std::size_t k = 0; k < bsz; ++k) {
        const auto& seq = training[order[start + k]];
        VectorXd dlogits = loss_dlogits(
            preds[k], labels.Yp.row(static_cast<long>(k)).transpose(),
            std::max(lengths[k] - 1, 1), 1.0 / static_cast<double>(bsz));
        model::backward_sequence(result.params, seq, traces[k], dlogits, grads);
      }
      adam_step(result.params, grads, adam, tcfg);
      epoch_loss += loss;
      ++steps;
      if (progress) progress(epoch, static_cast<int>(steps) - 1, loss);
    }
    epoch_loss /= static_cast<double>(std::max(steps, 1L));

    double val_loss = epoch_loss;
    if (!val_set.empty()) {
      std::vector<VectorXd> val_preds;
      for (const auto& s : val_set)
        val_preds.push_back(model::forward_sequence(
            result.params, s, val_noise_seed, model::NoiseMode::kGumbel));
      val_loss = soft_label_loss(val_preds, val_labels, val_lengths);
    }
    result.history.push_back({epoch, epoch_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      best = result.params;
      best_epoch = epoch;
    }
  }

  result.params = best;
  result.best_val_loss = best_val;
  result.best_epoch = best_epoch;
  return result;
}

}  // namespace itd::train
