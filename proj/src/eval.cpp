#include "menan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "menan/error.hpp"
#include "menan/ops.hpp"

namespace menan::eval {

namespace nx = menan::numerics;
using json = nlohmann::ordered_json;

namespace {

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

double speaker_probe(const Tensor& train_x, std::span<const std::size_t> train_y,
                     const Tensor& test_x, std::span<const std::size_t> test_y,
                     std::size_t n_classes, const ProbeConfig& config) {
  if (train_x.rank() != 2 || test_x.rank() != 2 || train_x.dim(1) != test_x.dim(1)) {
    throw DimensionError("probe inputs must be [N, D] with a shared D");
  }
  const std::size_t n = train_x.dim(0), d = train_x.dim(1);
  if (n == 0 || test_x.dim(0) == 0) throw MetricError("probe split is empty");
  if (train_y.size() != n || test_y.size() != test_x.dim(0)) {
    throw MetricError("probe label count mismatch");
  }
  std::vector<std::size_t> seen(train_y.begin(), train_y.end());
  std::sort(seen.begin(), seen.end());
  if (std::unique(seen.begin(), seen.end()) - seen.begin() < 2) {
    throw MetricError("probe needs at least two classes");
  }

  std::vector<double> shift(d, 0.0), gain(d, 1.0);
  if (config.standardize) {
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += train_x[i * d + j];
      m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) v += std::pow(train_x[i * d + j] - m, 2);
      v /= static_cast<double>(n);
      shift[j] = m;
      gain[j] = v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0;
    }
  }
  auto transform = [&](const Tensor& x) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - shift[i % d]) * gain[i % d];
    return out;
  };
  const auto xs = transform(train_x);
  const auto xt = transform(test_x);

  auto rng = model::seeded_rng(config.seed, 7);
  model::ClassifierHead head("probe", n_classes, rng, d);
  nx::AdamConfig adam;
  adam.lr = config.lr;
  adam.total_steps = 0;
  nx::Adam opt(adam);
  opt.attach(head.params());

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t bs = std::max<std::size_t>(config.batch_size, 1);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      std::vector<double> rows;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        rows.insert(rows.end(), xs.begin() + order[i] * d, xs.begin() + (order[i] + 1) * d);
        labels.push_back(train_y[order[i]]);
      }
      auto loss = training::speaker_ce_loss(
          head.log_probs(Tensor::from({end - start, d}, std::move(rows))), labels);
      nx::backward(loss);
      opt.step(step++);
      head.params().zero_grad();
      loss_sum += loss.item();
      ++batches;
    }
    if (loss_sum / static_cast<double>(batches) < config.converged_loss) break;
  }

  head.params().set_frozen(true);
  auto lp = head.log_probs(Tensor::from({test_x.dim(0), d}, xt));
  std::vector<std::size_t> preds;
  for (std::size_t i = 0; i < test_x.dim(0); ++i) {
    preds.push_back(argmax_row(lp.values().subspan(i * n_classes, n_classes)));
  }
  return weighted_accuracy(preds, test_y);
}

double probe_fold(model::Model& model, const corpus::FoldData& fold, const ProbeConfig& config) {
  const auto classes = training::speaker_classes(fold);
  std::vector<corpus::Example> a, b;
  for (std::size_t i = 0; i < fold.train_originals.size(); ++i) {
    (i % 2 == 0 ? a : b).push_back(fold.train_originals[i]);
  }
  auto labels = [&](const std::vector<corpus::Example>& xs) {
    std::vector<std::size_t> out;
    for (const auto& ex : xs) out.push_back(classes.at(ex.speaker_id));
    return out;
  };
  return speaker_probe(training::embed(model, a), labels(a), training::embed(model, b), labels(b),
                       classes.size(), config);
}

double speaker_classifier_accuracy(model::Model& model, const corpus::FoldData& fold) {
  const auto classes = training::speaker_classes(fold);
  std::vector<std::size_t> labels;
  for (const auto& ex : fold.train_originals) labels.push_back(classes.at(ex.speaker_id));
  return weighted_accuracy(training::predict_speakers(model, fold.train_originals), labels);
}

namespace {

double speaker_probability_gap(model::Model& model, const corpus::FoldData& fold) {
  training::InferenceGuard guard(model);
  auto v = training::embed(model, fold.train_originals);
  auto lp = model.classify_speaker(v);
  const std::size_t k = lp.dim(1);
  double gap = 0.0;
  for (std::size_t i = 0; i < lp.dim(0); ++i) {
    auto row = lp.values().subspan(i * k, k);
    auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    gap += std::exp(*hi) - std::exp(*lo);
  }
  return gap / static_cast<double>(lp.dim(0));
}

Stat stat_of(const std::vector<FoldReport>& folds, double FoldReport::*field) {
  Stat s;
  s.min = INFINITY;
  s.max = -INFINITY;
  for (const auto& f : folds) {
    s.mean += f.*field;
    s.min = std::min(s.min, f.*field);
    s.max = std::max(s.max, f.*field);
  }
  s.mean /= static_cast<double>(folds.size());
  return s;
}

json stat_json(const Stat& s) { return json{{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; }

}  // namespace

SplitScores score_split(model::Model& model, std::span<const corpus::Example> examples,
                        std::size_t n_emotions) {
  std::vector<std::size_t> labels;
  for (const auto& ex : examples) labels.push_back(ex.emotion);
  auto preds = training::predict_emotions(model, examples);
  return {weighted_accuracy(preds, labels), unweighted_accuracy(preds, labels, n_emotions)};
}

FoldReport evaluate_fold(model::Model& model, const corpus::FoldData& fold,
                         const ProbeConfig& probe) {
  FoldReport r;
  r.fold_id = fold.spec.index;
  const auto val = score_split(model, fold.val, fold.emotions.size());
  const auto test = score_split(model, fold.test, fold.emotions.size());
  r.val_WA = val.WA;
  r.val_UA = val.UA;
  r.test_WA = test.WA;
  r.test_UA = test.UA;
  r.delta_WA = r.test_WA - r.val_WA;
  r.delta_UA = r.test_UA - r.val_UA;
  r.probe_accuracy = probe_fold(model, fold, probe);
  if (model.sc) {
    r.sc_accuracy = speaker_classifier_accuracy(model, fold);
    r.sc_prob_gap = speaker_probability_gap(model, fold);
  }
  return r;
}

void aggregate(CvReport& report) {
  if (report.folds.empty()) throw MetricError("no folds to aggregate");
  const auto& f = report.folds;
  report.val_WA = stat_of(f, &FoldReport::val_WA);
  report.val_UA = stat_of(f, &FoldReport::val_UA);
  report.test_WA = stat_of(f, &FoldReport::test_WA);
  report.test_UA = stat_of(f, &FoldReport::test_UA);
  report.delta_WA = stat_of(f, &FoldReport::delta_WA);
  report.delta_UA = stat_of(f, &FoldReport::delta_UA);
  report.probe_accuracy = stat_of(f, &FoldReport::probe_accuracy);
  report.delta_WA_of_means = report.test_WA.mean - report.val_WA.mean;
  report.delta_UA_of_means = report.test_UA.mean - report.val_UA.mean;
}

CvReport run_cv(const training::TrainConfig& config, std::span<const corpus::FoldData> folds,
                const ProbeConfig& probe, const std::optional<std::filesystem::path>& out_root) {
  CvReport report;
  report.regime = training::regime_name(config.regime);
  for (const auto& fold : folds) {
    auto model = training::make_model(fold, config.regime, config.seed);
    std::optional<std::filesystem::path> dir;
    if (out_root) dir = *out_root / ("fold_" + std::to_string(fold.spec.index));
    auto result = training::train(*model, fold, config, dir);
    ProbeConfig p = probe;
    p.seed = probe.seed ^ (fold.spec.index + 1);
    auto r = evaluate_fold(*model, fold, p);
    r.best_epoch = result.best_epoch;
    if (model->sc) r.final_entropy = result.epochs.back().L_H_Spk;
    report.folds.push_back(r);
  }
  aggregate(report);
  return report;
}

json to_json(const FoldReport& r) {
  json j{{"fold", r.fold_id},         {"val_WA", r.val_WA},     {"val_UA", r.val_UA},
         {"test_WA", r.test_WA},      {"test_UA", r.test_UA},   {"delta_WA", r.delta_WA},
         {"delta_UA", r.delta_UA},    {"probe_accuracy", r.probe_accuracy},
         {"best_epoch", r.best_epoch}};
  if (r.sc_accuracy) j["sc_accuracy"] = *r.sc_accuracy;
  if (r.sc_prob_gap) j["sc_prob_gap"] = *r.sc_prob_gap;
  if (r.final_entropy) j["final_L_H_Spk"] = *r.final_entropy;
  return j;
}

json to_json(const CvReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) folds.push_back(to_json(f));
  return json{{"regime", r.regime},
              {"folds", folds},
              {"aggregate",
               {{"val_WA", stat_json(r.val_WA)},
                {"val_UA", stat_json(r.val_UA)},
                {"test_WA", stat_json(r.test_WA)},
                {"test_UA", stat_json(r.test_UA)},
                {"delta_WA", stat_json(r.delta_WA)},
                {"delta_UA", stat_json(r.delta_UA)},
                {"probe_accuracy", stat_json(r.probe_accuracy)},
                {"delta_WA_of_means", r.delta_WA_of_means},
                {"delta_UA_of_means", r.delta_UA_of_means}}}};
}

std::string format_table(std::span<const CvReport> reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s | %7s %7s %7s | %7s %7s %7s | %7s\n", "", "WA", "",
                "", "UA", "", "", "");
  out << line;
  std::snprintf(line, sizeof(line), "%-10s | %7s %7s %7s | %7s %7s %7s | %7s\n", "regime", "Val",
                "Test", "Delta", "Val", "Test", "Delta", "Probe");
  out << line << std::string(79, '-') << '\n';
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line),
                  "%-10s | %7.2f %7.2f %7.2f | %7.2f %7.2f %7.2f | %7.2f\n", r.regime.c_str(),
                  r.val_WA.mean, r.test_WA.mean, r.delta_WA.mean, r.val_UA.mean, r.test_UA.mean,
                  r.delta_UA.mean, r.probe_accuracy.mean);
    out << line;
  }
  return out.str();
}

void export_embeddings(const std::filesystem::path& path, model::Model& model,
                       std::span<const corpus::Example> examples,
                       std::span<const std::string> emotion_names) {
  auto v = training::embed(model, examples);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,speaker_id,emotion";
  for (std::size_t j = 0; j < model::kEmbeddingDim; ++j) out << ",v_" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    out << ex.utterance_id << ',' << ex.speaker_id << ',' << emotion_names[ex.emotion];
    for (std::size_t j = 0; j < model::kEmbeddingDim; ++j) {
      out << ',' << v[i * model::kEmbeddingDim + j];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace menan::eval
