#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "menan/error.hpp"
#include "menan/eval.hpp"
#include "tiny_corpus.hpp"

using namespace menan;
using namespace menan::eval;
namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> v(std::initializer_list<std::size_t> xs) { return xs; }

// Accuracy from an explicit confusion matrix.
std::pair<double, double> confusion_oracle(const std::vector<std::size_t>& preds,
                                           const std::vector<std::size_t>& labels,
                                           std::size_t k) {
  std::vector<std::vector<double>> cm(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < labels.size(); ++i) cm[labels[i]][preds[i]] += 1.0;
  double diag = 0, total = 0, recall = 0;
  for (std::size_t r = 0; r < k; ++r) {
    double row = 0;
    for (double x : cm[r]) row += x;
    diag += cm[r][r];
    total += row;
    recall += cm[r][r] / row;
  }
  return {100.0 * diag / total, 100.0 * recall / k};
}

Tensor matrix(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
  return Tensor::from({rows, cols}, data);
}

const test_support::TinyCorpus& tiny() {
  static const auto corpus = test_support::make_tiny_corpus();
  return corpus;
}

}  // namespace

TEST(Metrics, Examples) {
  EXPECT_DOUBLE_EQ(weighted_accuracy(v({0, 1, 2}), v({0, 1, 2})), 100.0);
  EXPECT_DOUBLE_EQ(weighted_accuracy(v({0, 0, 0, 0}), v({0, 0, 1, 1})), 50.0);
  EXPECT_DOUBLE_EQ(unweighted_accuracy(v({0, 0, 0, 0}), v({0, 0, 0, 1}), 2), 50.0);
  EXPECT_DOUBLE_EQ(weighted_accuracy(v({0, 0, 0, 0}), v({0, 0, 0, 1})), 75.0);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(weighted_accuracy(v({}), v({})), MetricError);
  EXPECT_THROW(unweighted_accuracy(v({0, 0}), v({0, 0}), 2), MetricError);
  EXPECT_THROW(weighted_accuracy(v({0}), v({0, 1})), MetricError);
}

TEST(Metrics, AgreeWithConfusionMatrix) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 5;
    const std::size_t n = k + rng() % 60;
    std::vector<std::size_t> labels(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = i < k ? i : rng() % k;
      preds[i] = rng() % k;
    }
    auto [wa, ua] = confusion_oracle(preds, labels, k);
    EXPECT_NEAR(weighted_accuracy(preds, labels), wa, 1e-12);
    EXPECT_NEAR(unweighted_accuracy(preds, labels, k), ua, 1e-12);
  }
}

TEST(Metrics, BalancedLabelsGiveEqualWaAndUa) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> labels, preds;
    for (std::size_t c = 0; c < 4; ++c)
      for (int r = 0; r < 7; ++r) {
        labels.push_back(c);
        preds.push_back(rng() % 4);
      }
    EXPECT_NEAR(weighted_accuracy(preds, labels), unweighted_accuracy(preds, labels, 4), 1e-12);
  }
}

TEST(Probe, OneHotCodesAreFullyInformative) {
  const std::size_t k = 6, n = 120;
  std::vector<double> xs, xt;
  std::vector<std::size_t> ys, yt;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      xs.push_back(j == i % k);
      xt.push_back(j == (i + 1) % k);
    }
    ys.push_back(i % k);
    yt.push_back((i + 1) % k);
  }
  EXPECT_DOUBLE_EQ(speaker_probe(matrix(n, k, xs), ys, matrix(n, k, xt), yt, k), 100.0);
}

TEST(Probe, ConstantEmbeddingsGiveChance) {
  const std::size_t k = 4, n = 200;
  std::vector<double> x(n * 8, 0.5);
  std::vector<std::size_t> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(i % k);
  EXPECT_NEAR(speaker_probe(matrix(n, 8, x), y, matrix(n, 8, x), y, k), 100.0 / k, 1e-9);
}

TEST(Probe, ShuffledLabelsNearChance) {
  const std::size_t k = 8, n = 4000, d = 12;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<double> xs(n * d), xt(n * d);
  for (auto& x : xs) x = g(rng);
  for (auto& x : xt) x = g(rng);
  std::vector<std::size_t> ys(n), yt(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = rng() % k;
    yt[i] = rng() % k;
  }
  ProbeConfig cfg;
  cfg.max_epochs = 30;
  EXPECT_NEAR(speaker_probe(matrix(n, d, xs), ys, matrix(n, d, xt), yt, k, cfg), 100.0 / k, 3.0);
}

TEST(Probe, SingleClassRejected) {
  std::vector<double> x(20, 1.0);
  std::vector<std::size_t> y(10, 0);
  EXPECT_THROW(speaker_probe(matrix(10, 2, x), y, matrix(10, 2, x), y, 3), MetricError);
}

TEST(Reports, AggregateAndDeltas) {
  CvReport r;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 100);
  for (std::size_t i = 0; i < 10; ++i) {
    FoldReport f;
    f.fold_id = i;
    f.val_WA = u(rng);
    f.test_WA = u(rng);
    f.val_UA = u(rng);
    f.test_UA = u(rng);
    f.delta_WA = f.test_WA - f.val_WA;
    f.delta_UA = f.test_UA - f.val_UA;
    f.probe_accuracy = u(rng);
    r.folds.push_back(f);
  }
  aggregate(r);
  double mean = 0, lo = 1e9, hi = -1e9;
  for (const auto& f : r.folds) {
    mean += f.test_UA / 10;
    lo = std::min(lo, f.test_UA);
    hi = std::max(hi, f.test_UA);
  }
  EXPECT_NEAR(r.test_UA.mean, mean, 1e-12);
  EXPECT_EQ(r.test_UA.min, lo);
  EXPECT_EQ(r.test_UA.max, hi);
  EXPECT_NEAR(r.delta_WA.mean, r.delta_WA_of_means, 1e-12);
  auto j = to_json(r);
  EXPECT_EQ(j["folds"].size(), 10u);
  EXPECT_TRUE(j["aggregate"].contains("delta_UA_of_means"));
  std::array<CvReport, 1> one{r};
  auto table = format_table(one);
  EXPECT_NE(table.find("Delta"), std::string::npos);
  CvReport empty;
  EXPECT_THROW(aggregate(empty), MetricError);
}

TEST(Reports, DeltaIsTestMinusVal) {
  auto fold = tiny().fold(0);
  training::TrainConfig cfg;
  cfg.regime = training::Regime::multitask;
  cfg.epochs = 2;
  std::array<corpus::FoldData, 1> folds{fold};
  ProbeConfig probe;
  probe.max_epochs = 20;
  auto r = run_cv(cfg, folds, probe);
  ASSERT_EQ(r.folds.size(), 1u);
  const auto& f = r.folds[0];
  EXPECT_EQ(f.delta_WA, f.test_WA - f.val_WA);
  EXPECT_EQ(f.delta_UA, f.test_UA - f.val_UA);
  for (double a : {f.val_WA, f.val_UA, f.test_WA, f.test_UA, f.probe_accuracy}) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 100.0);
  }
  ASSERT_TRUE(f.sc_accuracy.has_value());
  ASSERT_TRUE(f.final_entropy.has_value());
}

TEST(Export, CsvShapeAndDeterminism) {
  auto fold = tiny().fold(0);
  auto model = training::make_model(fold, training::Regime::menan, 3);
  auto dir = fs::temp_directory_path() / "menan_export_test";
  fs::create_directories(dir);
  export_embeddings(dir / "a.csv", *model, fold.train_originals, fold.emotions);
  export_embeddings(dir / "b.csv", *model, fold.train_originals, fold.emotions);
  std::ifstream a(dir / "a.csv"), b(dir / "b.csv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
  std::istringstream lines(sa.str());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3 + 96 - 1);
    if (rows == 0) EXPECT_EQ(line.rfind("id,speaker_id,emotion,v_0,", 0), 0u);
    ++rows;
  }
  EXPECT_EQ(rows, fold.train_originals.size() + 1);
  fs::remove_all(dir);
}
