#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "menan/dataset.hpp"
#include "menan/model.hpp"
#include "menan/optim.hpp"

namespace menan::training {

using numerics::Tensor;

enum class Regime { ec_only, multitask, dat, menan };

std::string regime_name(Regime regime);
/// Throws ConfigError for an unknown name.
Regime parse_regime(const std::string& name);

struct TrainConfig {
  Regime regime = Regime::menan;
  double lambda = 0.5;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
  double decay_power = 0.9;

  /// Throws ConfigError unless 0 < lambda < 1, lr > 0, batch_size >= 1,
  /// epochs >= 1 and decay_power >= 0.
  void validate() const;
};

/// Plain `key = value` lines; '#' starts a comment; blank lines ignored.
/// Throws ConfigError on a malformed line or a repeated key.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Applies the training keys (regime, lambda, lr, batch_size, epochs, seed,
/// decay_power) found in `kv`; other keys are left alone.
void apply_train_keys(const KeyValues& kv, TrainConfig& config);

/// Losses on log-probabilities [B, K] (or [K] with one label).
/// Cross entropy: mean over the batch of -log P(label). Throws LabelError
/// when a label is not below K.
Tensor emotion_ce_loss(const Tensor& log_probs, std::span<const std::size_t> labels);
Tensor speaker_ce_loss(const Tensor& log_probs, std::span<const std::size_t> labels);
/// Mean over the batch of -sum_j P_j log P_j, natural log. Rows must be
/// finite log-probabilities; vanishing probabilities contribute zero.
Tensor speaker_entropy(const Tensor& log_probs);

struct LossReport {
  double L_D_Spk = 0.0;
  double L_H_Spk = 0.0;
  double L_D_Emo = 0.0;
  double L_total = 0.0;
  double lambda = 0.5;
  bool has_speaker = true;
};

struct Batch {
  std::vector<const dsp::FeatureMatrix*> features;
  std::vector<std::size_t> emotions;
  std::vector<std::size_t> speakers;
};

/// DAT objective on an embedding: lambda*L_D_Emo + L_D_Spk, where the
/// speaker head reads scale_grad(v, reversal). The trainer uses
/// reversal = -(1-lambda). Fills `report` when given.
Tensor dat_objective(const model::Model& model, const Tensor& embedding, const Batch& batch,
                     double lambda, double reversal, LossReport* report = nullptr);

enum class Phase { speaker_step, main_step };

/// Owns the optimizers for one model and applies one regime per batch.
///   ec_only:   minimise L_D_Emo.
///   multitask: minimise lambda*L_D_Emo + (1-lambda)*L_D_Spk jointly.
///   dat:       SC minimises L_D_Spk; the encoder sees that gradient scaled
///              by -(1-lambda); EC weighted by lambda. One joint step.
///   menan:     (a) ENC, EC frozen, SC minimises L_D_Spk;
///              (b) SC frozen, ENC and EC minimise
///                  lambda*L_D_Emo - (1-lambda)*L_H_Spk.
class Trainer {
 public:
  /// `total_steps` sets the polynomial decay horizon (0 disables decay).
  Trainer(model::Model& model, const TrainConfig& config, std::size_t total_steps);

  LossReport step(const Batch& batch);
  LossReport ec_only_step(const Batch& batch);
  LossReport multitask_step(const Batch& batch);
  LossReport dat_step(const Batch& batch);
  LossReport menan_step(const Batch& batch);

  /// Called after every optimizer sub-step.
  std::function<void(Phase)> on_substep;

  std::size_t steps_taken() const { return steps_; }
  numerics::Adam& main_optimizer() { return main_opt_; }
  numerics::Adam& speaker_optimizer() { return speaker_opt_; }
  const numerics::Adam& main_optimizer() const { return main_opt_; }
  const numerics::Adam& speaker_optimizer() const { return speaker_opt_; }

 private:
  void require_speaker_head() const;
  void finish_substep(Phase phase);

  model::Model& model_;
  TrainConfig config_;
  numerics::Adam main_opt_;
  numerics::Adam speaker_opt_;
  std::size_t steps_ = 0;
};

/// Freezes every parameter set of a model for the guard's lifetime, so
/// forward passes build no graph; previous states are restored afterwards.
class InferenceGuard {
 public:
  explicit InferenceGuard(model::Model& model);
  ~InferenceGuard();
  InferenceGuard(const InferenceGuard&) = delete;
  InferenceGuard& operator=(const InferenceGuard&) = delete;

 private:
  std::vector<std::pair<numerics::ParamSet*, bool>> saved_;
};

/// Arg-max emotion and speaker predictions, encoding `batch_size` at a time.
std::vector<std::size_t> predict_emotions(model::Model& model,
                                          std::span<const corpus::Example> examples,
                                          std::size_t batch_size = 32);
std::vector<std::size_t> predict_speakers(model::Model& model,
                                          std::span<const corpus::Example> examples,
                                          std::size_t batch_size = 32);
/// Embeddings [N, 96].
Tensor embed(model::Model& model, std::span<const corpus::Example> examples,
             std::size_t batch_size = 32);

/// Training speakers of a fold, in fold order, mapped to SC class indices.
std::map<std::string, std::size_t> speaker_classes(const corpus::FoldData& fold);

struct EpochSummary {
  std::size_t epoch = 0;
  double L_D_Spk = 0.0;  // batch means over the epoch
  double L_H_Spk = 0.0;
  double L_D_Emo = 0.0;
  double L_total = 0.0;
  double val_WA = 0.0;
  double val_UA = 0.0;
};

struct TrainResult {
  std::vector<EpochSummary> epochs;
  std::vector<LossReport> batches;  // every batch of every epoch
  std::size_t best_epoch = 0;
  double best_val_UA = 0.0;
};

/// Model shaped for a fold: EC over the fold's emotions and, unless the
/// regime is ec_only, SC over its training speakers.
std::unique_ptr<model::Model> make_model(const corpus::FoldData& fold, Regime regime,
                                         std::uint64_t seed);

/// Fits the input scaler on the training split, then runs `epochs` epochs
/// of uniformly shuffled mini-batches. After every epoch the validation
/// WA/UA are computed; the parameters with the best validation UA (earliest
/// on ties) are restored into `model` on return. When `out_dir` is given,
/// writes `train.log.jsonl` (one object per batch) and `best.ckpt` there.
/// Throws ConfigError on an empty split.
TrainResult train(model::Model& model, const corpus::FoldData& fold, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Model checkpoint: parameters, input scaler and Adam moments, with JSON
/// metadata holding the regime, label sets and training settings.
struct ModelInfo {
  Regime regime = Regime::menan;
  std::size_t fold = 0;
  std::size_t epoch = 0;
  double lambda = 0.5;
  std::uint64_t seed = 0;
  std::vector<std::string> emotions;
  std::vector<std::string> train_speakers;  // empty without SC
};

void save_model(const std::filesystem::path& path, model::Model& model, const ModelInfo& info,
                const Trainer* trainer = nullptr);
struct LoadedModel {
  std::unique_ptr<model::Model> model;
  ModelInfo info;
};
/// Throws IoError when the file is missing or malformed.
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace menan::training
