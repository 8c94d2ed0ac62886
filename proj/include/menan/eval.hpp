#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "menan/metrics.hpp"
#include "menan/training.hpp"

namespace menan::eval {

using numerics::Tensor;

/// Fresh SC-shaped classifier trained with Adam on frozen embeddings.
struct ProbeConfig {
  std::size_t max_epochs = 400;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Stop once the epoch's mean training loss falls below this value.
  double converged_loss = 1e-3;
  /// Standardise every embedding dimension with probe-train statistics.
  bool standardize = false;
};

/// Held-out accuracy (percent) of a probe trained on (train_x, train_y) and
/// scored on (test_x, test_y); inputs are [N, D]. Throws MetricError when
/// the training labels hold fewer than two classes or a split is empty.
double speaker_probe(const Tensor& train_x, std::span<const std::size_t> train_y,
                     const Tensor& test_x, std::span<const std::size_t> test_y,
                     std::size_t n_classes, const ProbeConfig& config = {});

/// Probe on a fold's training-speaker originals: even positions train the
/// probe, odd positions score it.
double probe_fold(model::Model& model, const corpus::FoldData& fold,
                  const ProbeConfig& config = {});

/// Accuracy (percent) of the model's own SC on the training originals.
double speaker_classifier_accuracy(model::Model& model, const corpus::FoldData& fold);

struct SplitScores {
  double WA = 0.0;
  double UA = 0.0;
};
SplitScores score_split(model::Model& model, std::span<const corpus::Example> examples,
                        std::size_t n_emotions);

struct FoldReport {
  std::size_t fold_id = 0;
  double val_WA = 0.0, val_UA = 0.0;
  double test_WA = 0.0, test_UA = 0.0;
  double delta_WA = 0.0, delta_UA = 0.0;  // test - val
  double probe_accuracy = 0.0;
  std::optional<double> sc_accuracy;  // absent without SC
  std::size_t best_epoch = 0;
  /// Mean L_H_Spk over the final epoch's batches, when an SC exists.
  std::optional<double> final_entropy;
  /// Mean over training originals of max_k P(k|v) - min_k P(k|v) for SC.
  std::optional<double> sc_prob_gap;
};

/// Scores a trained model on a fold: val/test WA/UA, deltas, probe, SC.
FoldReport evaluate_fold(model::Model& model, const corpus::FoldData& fold,
                         const ProbeConfig& probe = {});

struct Stat {
  double mean = 0.0, min = 0.0, max = 0.0;
};

struct CvReport {
  std::string regime;
  std::vector<FoldReport> folds;
  Stat val_WA, val_UA, test_WA, test_UA, delta_WA, delta_UA, probe_accuracy;
  /// mean(test) - mean(val), next to the per-fold mean of deltas.
  double delta_WA_of_means = 0.0, delta_UA_of_means = 0.0;
};

/// Fills the aggregates from `report.folds`.
void aggregate(CvReport& report);

/// Trains and evaluates every fold in turn. With `out_root`, fold i writes
/// into `<out_root>/fold_<i>/`.
CvReport run_cv(const training::TrainConfig& config, std::span<const corpus::FoldData> folds,
                const ProbeConfig& probe = {},
                const std::optional<std::filesystem::path>& out_root = std::nullopt);

nlohmann::ordered_json to_json(const FoldReport& report);
nlohmann::ordered_json to_json(const CvReport& report);
/// Aligned text table: one row per regime, Val/Test/Delta for WA and UA
/// (fold means) plus the probe accuracy.
std::string format_table(std::span<const CvReport> reports);

/// CSV with header id,speaker_id,emotion,v_0..v_95, one row per example.
void export_embeddings(const std::filesystem::path& path, model::Model& model,
                       std::span<const corpus::Example> examples,
                       std::span<const std::string> emotion_names);

}  // namespace menan::eval
