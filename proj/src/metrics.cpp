#include "itd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace itd::metrics {

void DetectionConfig::validate() const {
  if (fpr_target <= 0.0 || fpr_target >= 1.0)
    throw ConfigError("fpr_target must lie in (0,1)");
  if (tau && (*tau < 0.0 || *tau > 1.0))
    throw ConfigError("tau must lie in [0,1]");
  if (dr_floor < 0.0 || dr_floor > 1.0)
    throw ConfigError("dr_floor must lie in [0,1]");
}

std::vector<ScoredSequence> score(const model::ModelParams& params,
                                  const std::vector<model::SequenceInput>& seqs,
                                  std::uint64_t eval_seed,
                                  const std::vector<std::string>* ids) {
  if (ids && ids->size() != seqs.size())
    throw DataError("id list does not match sequence count");
  std::vector<ScoredSequence> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& seq = seqs[i];
    if (seq.true_code < 0 || seq.true_code >= params.cfg.n_codes)
      throw DataError("true code out of range");
    Eigen::VectorXd y = model::forward_sequence(params, seq, eval_seed,
                                                model::NoiseMode::kGumbel);
    ScoredSequence s;
    s.id = ids ? (*ids)[i] : "seq-" + std::to_string(i);
    s.y_m = y(seq.true_code);
    s.abnormal = seq.abnormal;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<char> flag(const std::vector<ScoredSequence>& scored, double tau) {
  double t = std::clamp(tau, 0.0, 1.0);
  std::vector<char> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.y_m < t ? 1 : 0);
  return out;
}

double select_threshold(const std::vector<ScoredSequence>& scored,
                        double fpr_target) {
  std::vector<double> normal;
  std::vector<double> candidates = {0.0, 1.0};
  for (const auto& s : scored) {
    candidates.push_back(s.y_m);
    if (!s.abnormal) normal.push_back(s.y_m);
  }
  if (normal.empty())
    throw DataError("threshold selection needs at least one normal sequence");
  std::sort(normal.begin(), normal.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  double n = static_cast<double>(normal.size());
  for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
    long below =
        std::lower_bound(normal.begin(), normal.end(), *it) - normal.begin();
    if (static_cast<double>(below) / n <= fpr_target) return *it;
  }
  return 0.0;  // unreachable: FPR(0) = 0
}

DetectionReport roc_and_auc(const std::vector<ScoredSequence>& scored,
                            double tau) {
  DetectionReport rep;
  rep.tau = tau;
  double t = std::clamp(tau, 0.0, 1.0);
  long n_abn = 0, n_norm = 0;
  for (const auto& s : scored) {
    bool flagged = s.y_m < t;
    if (s.abnormal) {
      ++n_abn;
      (flagged ? rep.tp : rep.fn) += 1;
    } else {
      ++n_norm;
      (flagged ? rep.fp : rep.tn) += 1;
    }
  }
  rep.dr = n_abn ? static_cast<double>(rep.tp) / n_abn : 0.0;
  rep.fpr = n_norm ? static_cast<double>(rep.fp) / n_norm : 0.0;

  // AUC as the Mann-Whitney statistic over anomaly scores, ties at half
  if (n_abn > 0 && n_norm > 0) {
    std::vector<std::pair<double, bool>> pts;
    pts.reserve(scored.size());
    for (const auto& s : scored) pts.emplace_back(s.anomaly_score(), s.abnormal);
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < pts.size()) {
      std::size_t j = i;
      while (j < pts.size() && pts[j].first == pts[i].first) ++j;
      double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (std::size_t k = i; k < j; ++k)
        if (pts[k].second) rank_sum += avg_rank;
      i = j;
    }
    double na = static_cast<double>(n_abn), nn = static_cast<double>(n_norm);
    rep.auc = (rank_sum - na * (na + 1.0) / 2.0) / (na * nn);
  }

  // ROC sweep over distinct anomaly scores, highest cutoff first
  std::vector<std::pair<double, bool>> desc;
  desc.reserve(scored.size());
  for (const auto& s : scored) desc.emplace_back(s.anomaly_score(), s.abnormal);
  std::sort(desc.begin(), desc.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  rep.roc.push_back({2.0, 0.0, 0.0});  // above every score: nothing flagged
  long cum_tp = 0, cum_fp = 0;
  std::size_t i = 0;
  while (i < desc.size()) {
    std::size_t j = i;
    while (j < desc.size() && desc[j].first == desc[i].first) ++j;
    for (std::size_t k = i; k < j; ++k)
      (desc[k].second ? cum_tp : cum_fp) += 1;
    RocPoint p;
    p.threshold = desc[i].first;
    p.fpr = n_norm ? static_cast<double>(cum_fp) / n_norm : 0.0;
    p.tpr = n_abn ? static_cast<double>(cum_tp) / n_abn : 0.0;
    rep.roc.push_back(p);
    i = j;
  }
  return rep;
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void emit_roc(const DetectionReport& report, const std::string& csv_path,
              const std::string& summary_path) {
  std::ostringstream csv;
  csv << "threshold,fpr,tpr\n";
  for (const auto& p : report.roc)
    csv << fmt17(p.threshold) << ',' << fmt17(p.fpr) << ',' << fmt17(p.tpr)
        << '\n';
  atomic_write_file(csv_path, csv.str());

  nlohmann::json summary;
  if (report.auc)
    summary["auc"] = *report.auc;
  else
    summary["auc"] = nullptr;
  summary["dr"] = report.dr;
  summary["fpr"] = report.fpr;
  summary["tau"] = report.tau;
  summary["tp"] = report.tp;
  summary["fp"] = report.fp;
  summary["tn"] = report.tn;
  summary["fn"] = report.fn;
  atomic_write_file(summary_path, summary.dump(2) + "\n");
}

}  // namespace itd::metrics
