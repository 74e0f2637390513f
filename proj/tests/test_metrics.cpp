#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "itd/metrics.hpp"
#include "json.hpp"

using namespace itd;
using namespace itd::metrics;

namespace {

std::vector<ScoredSequence> make_scored(const std::vector<double>& normals,
                                        const std::vector<double>& abnormals) {
  std::vector<ScoredSequence> out;
  for (double v : normals) out.push_back({"n", v, false});
  for (double v : abnormals) out.push_back({"a", v, true});
  return out;
}

// O(n^2) Mann-Whitney on anomaly scores, ties at one half
double auc_oracle(const std::vector<ScoredSequence>& scored) {
  double wins = 0.0;
  long na = 0, nn = 0;
  for (const auto& a : scored) {
    if (!a.abnormal) continue;
    ++na;
    for (const auto& n : scored) {
      if (n.abnormal) continue;
      if (a.anomaly_score() > n.anomaly_score())
        wins += 1.0;
      else if (a.anomaly_score() == n.anomaly_score())
        wins += 0.5;
    }
  }
  for (const auto& n : scored)
    if (!n.abnormal) ++nn;
  return wins / (static_cast<double>(na) * static_cast<double>(nn));
}

double trapezoid(const std::vector<RocPoint>& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return area;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("detection config validation") {
  DetectionConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.fpr_target = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DetectionConfig{};
  cfg.fpr_target = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DetectionConfig{};
  cfg.tau = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("scoring a zero-weight model yields the uniform probability") {
  model::ModelConfig cfg;
  cfg.feature_dim = 6;
  cfg.d_emb = 6;
  cfg.d_gcn = 4;
  cfg.d_attn = 4;
  cfg.n_heads = 2;
  cfg.d_lstm = 3;
  cfg.n_codes = 8;
  model::ModelParams zeros =
      model::ModelParams::zeros_like(model::ModelParams::init(cfg, 1));
  std::vector<model::SequenceInput> seqs;
  for (int i = 0; i < 3; ++i) {
    model::SequenceInput in;
    in.features = Eigen::MatrixXd::Constant(4, 6, 0.1 * (i + 1));
    in.graph = graph::build_explicit({0, 3, 3, 1}, i);
    in.mask_pos = i;
    in.true_code = i + 2;
    in.abnormal = i == 2;
    in.noise_tag = static_cast<std::uint64_t>(i);
    seqs.push_back(std::move(in));
  }
  auto scored = score(zeros, seqs, 42);
  REQUIRE(scored.size() == 3);
  for (const auto& s : scored) {
    CHECK(s.y_m == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
    CHECK(s.anomaly_score() == doctest::Approx(7.0 / 8.0).epsilon(1e-12));
  }
  CHECK(scored[0].id == "seq-0");
  CHECK(scored[2].abnormal);

  auto again = score(zeros, seqs, 42);
  for (std::size_t i = 0; i < scored.size(); ++i)
    CHECK(scored[i].y_m == again[i].y_m);

  std::vector<std::string> ids = {"x", "y", "z"};
  auto named = score(zeros, seqs, 42, &ids);
  CHECK(named[1].id == "y");

  seqs[0].true_code = 900;
  CHECK_THROWS_AS(score(zeros, seqs, 42), DataError);
}

TEST_CASE("flagging uses a strict threshold") {
  auto scored = make_scored({0.2, 0.5, 0.8}, {0.5});
  auto at_half = flag(scored, 0.5);
  CHECK(at_half[0] == 1);
  CHECK(at_half[1] == 0);  // y_m == tau stays unflagged
  CHECK(at_half[2] == 0);
  CHECK(at_half[3] == 0);

  auto none = flag(scored, 0.0);
  for (char f : none) CHECK(f == 0);

  auto all_below_one = flag(scored, 1.0 + 1e-9);  // clamps to 1
  for (char f : all_below_one) CHECK(f == 1);
}

TEST_CASE("threshold selection: worked example and edge targets") {
  auto scored = make_scored({0.1, 0.4, 0.6, 0.9}, {});
  CHECK(select_threshold(scored, 0.25) == 0.4);
  CHECK(select_threshold(scored, 1.0) == 1.0);
  CHECK(select_threshold(scored, 0.0) == 0.1);  // nothing strictly below 0.1
  CHECK_THROWS_AS(select_threshold(make_scored({}, {0.5}), 0.1), DataError);
}

TEST_CASE("threshold selection equals the exhaustive scan") {
  Rng rng(515);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> normals, abnormals;
    int nn = 3 + static_cast<int>(rng.below(40));
    int na = static_cast<int>(rng.below(15));
    for (int i = 0; i < nn; ++i)
      normals.push_back(rng.below(10) / 10.0);  // force plenty of ties
    for (int i = 0; i < na; ++i) abnormals.push_back(rng.below(10) / 10.0);
    auto scored = make_scored(normals, abnormals);
    double target = rng.uniform_in(0.01, 0.99);
    double got = select_threshold(scored, target);

    std::vector<double> candidates = {0.0, 1.0};
    for (const auto& s : scored) candidates.push_back(s.y_m);
    double best = -1.0;
    for (double t : candidates) {
      long below = 0;
      for (double v : normals)
        if (v < t) ++below;
      double fpr = static_cast<double>(below) / normals.size();
      if (fpr <= target && t > best) best = t;
    }
    CHECK(got == best);

    long below = 0;
    for (double v : normals)
      if (v < got) ++below;
    CHECK(static_cast<double>(below) / normals.size() <= target);
  }
}

TEST_CASE("auc endpoints: perfect separation and all ties") {
  auto perfect = make_scored({0.8, 0.9, 0.95}, {0.1, 0.2});
  DetectionReport rep = roc_and_auc(perfect, 0.5);
  REQUIRE(rep.auc.has_value());
  CHECK(*rep.auc == doctest::Approx(1.0).epsilon(1e-12));
  bool hits_corner = false;
  for (const auto& p : rep.roc)
    if (p.fpr == 0.0 && p.tpr == 1.0) hits_corner = true;
  CHECK(hits_corner);
  CHECK(rep.tp == 2);
  CHECK(rep.fn == 0);
  CHECK(rep.fp == 0);
  CHECK(rep.tn == 3);
  CHECK(rep.dr == doctest::Approx(1.0));
  CHECK(rep.fpr == doctest::Approx(0.0));

  auto tied = make_scored({0.5, 0.5, 0.5}, {0.5, 0.5});
  DetectionReport rep2 = roc_and_auc(tied, 0.5);
  REQUIRE(rep2.auc.has_value());
  CHECK(*rep2.auc == doctest::Approx(0.5).epsilon(1e-12));

  DetectionReport rep3 = roc_and_auc(make_scored({0.3, 0.7}, {}), 0.5);
  CHECK(!rep3.auc.has_value());
  CHECK(rep3.fpr == doctest::Approx(0.5));
  CHECK(rep3.dr == 0.0);
  CHECK(rep3.tp + rep3.fp + rep3.tn + rep3.fn == 2);
}

TEST_CASE("auc equals the pairwise oracle and the trapezoid of its own curve") {
  Rng rng(616);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> normals, abnormals;
    int nn = 1 + static_cast<int>(rng.below(30));
    int na = 1 + static_cast<int>(rng.below(30));
    bool coarse = rng.bernoulli(0.5);  // coarse grids produce heavy ties
    for (int i = 0; i < nn; ++i)
      normals.push_back(coarse ? rng.below(5) / 5.0 : rng.uniform());
    for (int i = 0; i < na; ++i)
      abnormals.push_back(coarse ? rng.below(5) / 5.0 : rng.uniform());
    auto scored = make_scored(normals, abnormals);
    DetectionReport rep = roc_and_auc(scored, 0.5);
    REQUIRE(rep.auc.has_value());
    CHECK(*rep.auc == doctest::Approx(auc_oracle(scored)).epsilon(1e-9));
    CHECK(trapezoid(rep.roc) == doctest::Approx(*rep.auc).epsilon(1e-9));

    for (std::size_t i = 1; i < rep.roc.size(); ++i) {
      CHECK(rep.roc[i].fpr >= rep.roc[i - 1].fpr);
      CHECK(rep.roc[i].tpr >= rep.roc[i - 1].tpr);
    }
    CHECK(rep.roc.front().fpr == 0.0);
    CHECK(rep.roc.back().fpr == doctest::Approx(1.0));
    CHECK(rep.roc.back().tpr == doctest::Approx(1.0));
  }
}

TEST_CASE("auc is invariant under monotone score transforms") {
  auto scored = make_scored({0.15, 0.5, 0.62, 0.8}, {0.1, 0.3, 0.5});
  DetectionReport base = roc_and_auc(scored, 0.5);
  auto squeezed = scored;
  for (auto& s : squeezed) s.y_m = 0.2 + 0.6 * s.y_m;  // monotone in y_m
  DetectionReport moved = roc_and_auc(squeezed, 0.5);
  REQUIRE(base.auc.has_value());
  REQUIRE(moved.auc.has_value());
  CHECK(*base.auc == *moved.auc);
}

TEST_CASE("roc emission: format, corner, null auc, determinism") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() /
                 ("itd_metrics_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  auto perfect = make_scored({0.8, 0.9}, {0.1});
  DetectionReport rep = roc_and_auc(perfect, select_threshold(perfect, 0.05));
  std::string csv = (dir / "roc.csv").string();
  std::string summary = (dir / "summary.json").string();
  emit_roc(rep, csv, summary);

  std::string text = slurp(csv);
  CHECK(text.substr(0, 18) == "threshold,fpr,tpr\n");
  auto parsed = nlohmann::json::parse(slurp(summary));
  CHECK(parsed["auc"].get<double>() == doctest::Approx(1.0));
  CHECK(parsed["tau"].get<double>() == rep.tau);
  CHECK(parsed["tp"].get<long>() == 1);

  emit_roc(rep, csv + ".again", summary + ".again");
  CHECK(slurp(csv + ".again") == text);
  CHECK(slurp(summary + ".again") == slurp(summary));

  DetectionReport no_abn = roc_and_auc(make_scored({0.3, 0.6}, {}), 0.5);
  emit_roc(no_abn, csv, summary);
  auto parsed2 = nlohmann::json::parse(slurp(summary));
  CHECK(parsed2["auc"].is_null());

  fs::remove_all(dir);
}
