#include "menan/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "menan/checkpoint.hpp"
#include "menan/error.hpp"
#include "menan/metrics.hpp"
#include "menan/ops.hpp"

namespace menan::training {

namespace nx = menan::numerics;
using json = nlohmann::ordered_json;

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::ec_only: return "ec_only";
    case Regime::multitask: return "multitask";
    case Regime::dat: return "dat";
    case Regime::menan: return "menan";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  for (Regime r : {Regime::ec_only, Regime::multitask, Regime::dat, Regime::menan}) {
    if (regime_name(r) == name) return r;
  }
  throw ConfigError("unknown regime '" + name + "' (expected ec_only, multitask, dat or menan)");
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in (0, 1)");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(decay_power >= 0.0)) throw ConfigError("decay_power must be non-negative");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  return v;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError("config key '" + key + "' given twice");
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

void apply_train_keys(const KeyValues& kv, TrainConfig& config) {
  for (const auto& [key, value] : kv) {
    if (key == "regime") config.regime = parse_regime(value);
    else if (key == "lambda") config.lambda = to_double(key, value);
    else if (key == "lr") config.lr = to_double(key, value);
    else if (key == "batch_size") config.batch_size = to_unsigned(key, value);
    else if (key == "epochs") config.epochs = to_unsigned(key, value);
    else if (key == "seed") config.seed = to_unsigned(key, value);
    else if (key == "decay_power") config.decay_power = to_double(key, value);
  }
}

namespace {

Tensor class_ce_loss(const Tensor& log_probs, std::span<const std::size_t> labels) {
  const std::size_t rows = log_probs.rank() == 1 ? 1 : log_probs.dim(0);
  const std::size_t k = log_probs.shape().back();
  if (labels.size() != rows) throw DimensionError("one label per row expected");
  std::vector<double> onehot(rows * k, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] >= k) {
      throw LabelError("label " + std::to_string(labels[i]) + " outside " + std::to_string(k) +
                       " classes");
    }
    onehot[i * k + labels[i]] = 1.0;
  }
  auto picked = nx::mul(Tensor::from(log_probs.shape(), std::move(onehot)), log_probs);
  return nx::scale(nx::sum(picked), -1.0 / static_cast<double>(rows));
}

}  // namespace

Tensor emotion_ce_loss(const Tensor& log_probs, std::span<const std::size_t> labels) {
  return class_ce_loss(log_probs, labels);
}

Tensor speaker_ce_loss(const Tensor& log_probs, std::span<const std::size_t> labels) {
  return class_ce_loss(log_probs, labels);
}

Tensor speaker_entropy(const Tensor& log_probs) {
  const std::size_t rows = log_probs.rank() == 1 ? 1 : log_probs.dim(0);
  // softmax of normalised log-probabilities is the distribution itself
  auto plogp = nx::mul(nx::softmax(log_probs), log_probs);
  return nx::scale(nx::sum(plogp), -1.0 / static_cast<double>(rows));
}

Trainer::Trainer(model::Model& model, const TrainConfig& config, std::size_t total_steps)
    : model_(model), config_(config) {
  config_.validate();
  nx::AdamConfig adam;
  adam.lr = config.lr;
  adam.decay_power = config.decay_power;
  adam.total_steps = total_steps;
  main_opt_ = nx::Adam(adam);
  speaker_opt_ = nx::Adam(adam);
  main_opt_.attach(model.enc.params());
  main_opt_.attach(model.ec.params());
  if (model.sc) speaker_opt_.attach(model.sc->params());
}

void Trainer::require_speaker_head() const {
  if (!model_.sc) throw UsageError(regime_name(config_.regime) + " needs a speaker head");
}

void Trainer::finish_substep(Phase phase) {
  for (auto* set : model_.param_sets()) set->zero_grad();
  if (on_substep) on_substep(phase);
}

LossReport Trainer::step(const Batch& batch) {
  switch (config_.regime) {
    case Regime::ec_only: return ec_only_step(batch);
    case Regime::multitask: return multitask_step(batch);
    case Regime::dat: return dat_step(batch);
    case Regime::menan: return menan_step(batch);
  }
  throw UsageError("unknown regime");
}

LossReport Trainer::ec_only_step(const Batch& batch) {
  for (auto* set : model_.param_sets()) set->set_frozen(false);
  auto v = model_.enc.encode_batch(batch.features);
  auto emo = emotion_ce_loss(model_.classify_emotion(v), batch.emotions);
  nx::backward(emo);
  main_opt_.step(steps_);
  ++steps_;
  finish_substep(Phase::main_step);
  LossReport r;
  r.lambda = config_.lambda;
  r.has_speaker = false;
  r.L_D_Emo = emo.item();
  r.L_total = r.L_D_Emo;
  return r;
}

LossReport Trainer::multitask_step(const Batch& batch) {
  require_speaker_head();
  for (auto* set : model_.param_sets()) set->set_frozen(false);
  const double lambda = config_.lambda;
  auto v = model_.enc.encode_batch(batch.features);
  auto emo = emotion_ce_loss(model_.classify_emotion(v), batch.emotions);
  auto spk_lp = model_.classify_speaker(v);
  auto spk = speaker_ce_loss(spk_lp, batch.speakers);
  auto total = nx::add(nx::scale(emo, lambda), nx::scale(spk, 1.0 - lambda));
  nx::backward(total);
  main_opt_.step(steps_);
  speaker_opt_.step(steps_);
  ++steps_;
  finish_substep(Phase::main_step);
  LossReport r;
  r.lambda = lambda;
  r.L_D_Spk = spk.item();
  r.L_H_Spk = speaker_entropy(spk_lp.detach()).item();
  r.L_D_Emo = emo.item();
  r.L_total = total.item();
  return r;
}

Tensor dat_objective(const model::Model& model, const Tensor& embedding, const Batch& batch,
                     double lambda, double reversal, LossReport* report) {
  if (!model.sc) throw UsageError("dat needs a speaker head");
  auto emo = emotion_ce_loss(model.classify_emotion(embedding), batch.emotions);
  auto spk_lp = model.classify_speaker(nx::scale_grad(embedding, reversal));
  auto spk = speaker_ce_loss(spk_lp, batch.speakers);
  if (report) {
    report->lambda = lambda;
    report->has_speaker = true;
    report->L_D_Spk = spk.item();
    report->L_H_Spk = speaker_entropy(spk_lp.detach()).item();
    report->L_D_Emo = emo.item();
    // objective seen by the encoder
    report->L_total = lambda * report->L_D_Emo - (1.0 - lambda) * report->L_D_Spk;
  }
  return nx::add(nx::scale(emo, lambda), spk);
}

LossReport Trainer::dat_step(const Batch& batch) {
  require_speaker_head();
  for (auto* set : model_.param_sets()) set->set_frozen(false);
  const double lambda = config_.lambda;
  LossReport r;
  auto v = model_.enc.encode_batch(batch.features);
  nx::backward(dat_objective(model_, v, batch, lambda, -(1.0 - lambda), &r));
  main_opt_.step(steps_);
  speaker_opt_.step(steps_);
  ++steps_;
  finish_substep(Phase::main_step);
  return r;
}

LossReport Trainer::menan_step(const Batch& batch) {
  require_speaker_head();
  const double lambda = config_.lambda;
  auto& enc = model_.enc.params();
  auto& ec = model_.ec.params();
  auto& sc = model_.sc->params();

  // One encoder pass serves both sub-steps: (a) leaves ENC untouched.
  enc.set_frozen(false);
  ec.set_frozen(false);
  sc.set_frozen(true);
  auto v = model_.enc.encode_batch(batch.features);

  // (a) speaker classifier on the frozen embedding
  enc.set_frozen(true);
  ec.set_frozen(true);
  sc.set_frozen(false);
  auto spk = speaker_ce_loss(model_.classify_speaker(v.detach()), batch.speakers);
  nx::backward(spk);
  speaker_opt_.step(steps_);
  finish_substep(Phase::speaker_step);

  // (b) encoder and emotion classifier against the frozen speaker classifier
  sc.set_frozen(true);
  enc.set_frozen(false);
  ec.set_frozen(false);
  auto entropy = speaker_entropy(model_.classify_speaker(v));
  auto emo = emotion_ce_loss(model_.classify_emotion(v), batch.emotions);
  auto total = nx::add(nx::scale(emo, lambda), nx::scale(entropy, -(1.0 - lambda)));
  nx::backward(total);
  main_opt_.step(steps_);
  ++steps_;
  sc.set_frozen(false);
  finish_substep(Phase::main_step);

  LossReport r;
  r.lambda = lambda;
  r.L_D_Spk = spk.item();
  r.L_H_Spk = entropy.item();
  r.L_D_Emo = emo.item();
  r.L_total = total.item();
  return r;
}

InferenceGuard::InferenceGuard(model::Model& model) {
  for (auto* set : model.param_sets()) {
    saved_.emplace_back(set, set->frozen());
    set->set_frozen(true);
  }
}

InferenceGuard::~InferenceGuard() {
  for (auto& [set, frozen] : saved_) set->set_frozen(frozen);
}

namespace {

template <typename Fn>
void for_each_chunk(std::span<const corpus::Example> examples, std::size_t batch_size, Fn&& fn) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    std::vector<const dsp::FeatureMatrix*> feats;
    for (std::size_t i = start; i < end; ++i) feats.push_back(examples[i].features);
    fn(feats);
  }
}

void append_argmax(const Tensor& scores, std::vector<std::size_t>& out) {
  const std::size_t k = scores.shape().back();
  const std::size_t rows = scores.numel() / k;
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = scores.values().subspan(i * k, k);
    out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
}

}  // namespace

std::vector<std::size_t> predict_emotions(model::Model& model,
                                          std::span<const corpus::Example> examples,
                                          std::size_t batch_size) {
  InferenceGuard guard(model);
  std::vector<std::size_t> out;
  for_each_chunk(examples, batch_size, [&](const auto& feats) {
    append_argmax(model.classify_emotion(model.enc.encode_batch(feats)), out);
  });
  return out;
}

std::vector<std::size_t> predict_speakers(model::Model& model,
                                          std::span<const corpus::Example> examples,
                                          std::size_t batch_size) {
  InferenceGuard guard(model);
  std::vector<std::size_t> out;
  for_each_chunk(examples, batch_size, [&](const auto& feats) {
    append_argmax(model.classify_speaker(model.enc.encode_batch(feats)), out);
  });
  return out;
}

Tensor embed(model::Model& model, std::span<const corpus::Example> examples,
             std::size_t batch_size) {
  InferenceGuard guard(model);
  std::vector<double> values;
  values.reserve(examples.size() * model::kEmbeddingDim);
  for_each_chunk(examples, batch_size, [&](const auto& feats) {
    auto v = model.enc.encode_batch(feats);
    values.insert(values.end(), v.values().begin(), v.values().end());
  });
  return Tensor::from({examples.size(), model::kEmbeddingDim}, std::move(values));
}

std::map<std::string, std::size_t> speaker_classes(const corpus::FoldData& fold) {
  std::map<std::string, std::size_t> out;
  for (const auto& s : fold.spec.train_speakers) out.emplace(s, out.size());
  return out;
}

std::unique_ptr<model::Model> make_model(const corpus::FoldData& fold, Regime regime,
                                         std::uint64_t seed) {
  std::optional<std::size_t> speakers;
  if (regime != Regime::ec_only) speakers = fold.spec.train_speakers.size();
  return std::make_unique<model::Model>(fold.emotions.size(), speakers, seed);
}

namespace {

json info_to_json(const ModelInfo& info) {
  return json{{"regime", regime_name(info.regime)}, {"fold", info.fold},
              {"epoch", info.epoch},                 {"lambda", info.lambda},
              {"seed", info.seed},                   {"emotions", info.emotions},
              {"train_speakers", info.train_speakers}};
}

nx::Checkpoint make_checkpoint(model::Model& model, const ModelInfo& info,
                               const Trainer* trainer) {
  nx::Checkpoint ckpt;
  ckpt.metadata = info_to_json(info).dump();
  const auto& s = model.enc.scaler;
  ckpt.params.push_back({"scaler.mean", {model::kInputChannels}, {s.mean.begin(), s.mean.end()}});
  ckpt.params.push_back(
      {"scaler.scale", {model::kInputChannels}, {s.scale.begin(), s.scale.end()}});
  for (auto* set : model.param_sets()) nx::append_params(ckpt, *set);
  if (trainer) {
    ckpt.step = trainer->steps_taken();
    nx::append_moments(ckpt, trainer->main_optimizer());
    nx::append_moments(ckpt, trainer->speaker_optimizer());
  }
  return ckpt;
}

void restore_checkpoint(const nx::Checkpoint& ckpt, model::Model& model) {
  for (const char* name : {"scaler.mean", "scaler.scale"}) {
    const auto* rec = ckpt.find_param(name);
    if (!rec || rec->values.size() != model::kInputChannels) {
      throw IoError(std::string("checkpoint lacks ") + name);
    }
    auto& dst = std::string(name) == "scaler.mean" ? model.enc.scaler.mean : model.enc.scaler.scale;
    std::copy(rec->values.begin(), rec->values.end(), dst.begin());
  }
  for (auto* set : model.param_sets()) nx::load_params(ckpt, *set);
}

ModelInfo info_from_json(const std::string& text) {
  ModelInfo info;
  try {
    auto j = json::parse(text);
    info.regime = parse_regime(j.at("regime").get<std::string>());
    info.fold = j.at("fold").get<std::size_t>();
    info.epoch = j.at("epoch").get<std::size_t>();
    info.lambda = j.at("lambda").get<double>();
    info.seed = j.at("seed").get<std::uint64_t>();
    info.emotions = j.at("emotions").get<std::vector<std::string>>();
    info.train_speakers = j.at("train_speakers").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("bad checkpoint metadata: ") + e.what());
  }
  return info;
}

json report_row(std::size_t epoch, std::size_t batch, const LossReport& r, double val_wa,
                double val_ua) {
  json row{{"epoch", epoch}, {"batch", batch}};
  if (r.has_speaker) {
    row["L_D_Spk"] = r.L_D_Spk;
    row["L_H_Spk"] = r.L_H_Spk;
  }
  row["L_D_Emo"] = r.L_D_Emo;
  row["L_total"] = r.L_total;
  row["val_WA"] = val_wa;
  row["val_UA"] = val_ua;
  return row;
}

}  // namespace

void save_model(const std::filesystem::path& path, model::Model& model, const ModelInfo& info,
                const Trainer* trainer) {
  nx::write_checkpoint(path, make_checkpoint(model, info, trainer));
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto ckpt = nx::read_checkpoint(path);
  LoadedModel out;
  out.info = info_from_json(ckpt.metadata);
  std::optional<std::size_t> speakers;
  if (!out.info.train_speakers.empty()) speakers = out.info.train_speakers.size();
  out.model = std::make_unique<model::Model>(out.info.emotions.size(), speakers, out.info.seed);
  try {
    restore_checkpoint(ckpt, *out.model);
  } catch (const DimensionError& e) {
    throw IoError(std::string("checkpoint does not match its metadata: ") + e.what());
  }
  return out;
}

TrainResult train(model::Model& model, const corpus::FoldData& fold, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  if (fold.train.empty() || fold.val.empty()) throw ConfigError("empty training or validation split");
  if (config.regime != Regime::ec_only && !model.sc) {
    throw ConfigError(regime_name(config.regime) + " needs a speaker head");
  }

  std::vector<const dsp::FeatureMatrix*> train_feats;
  for (const auto& ex : fold.train) train_feats.push_back(ex.features);
  model.enc.scaler = model::InputScaler::fit(train_feats);

  const auto spk_index = speaker_classes(fold);
  std::vector<std::size_t> val_labels;
  for (const auto& ex : fold.val) val_labels.push_back(ex.emotion);

  const std::size_t n = fold.train.size();
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  Trainer trainer(model, config, per_epoch * config.epochs);

  std::ofstream log;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    log.open(*out_dir / "train.log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot write " + (*out_dir / "train.log.jsonl").string());
  }

  ModelInfo info;
  info.regime = config.regime;
  info.fold = fold.spec.index;
  info.lambda = config.lambda;
  info.seed = config.seed;
  info.emotions = fold.emotions;
  if (model.sc) info.train_speakers = fold.spec.train_speakers;

  auto rng = model::seeded_rng(config.seed, 4);
  TrainResult result;
  std::optional<nx::Checkpoint> best;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const std::size_t first_report = result.batches.size();
    for (std::size_t b = 0; b < per_epoch; ++b) {
      Batch batch;
      for (std::size_t i = b * config.batch_size; i < std::min(n, (b + 1) * config.batch_size); ++i) {
        const auto& ex = fold.train[order[i]];
        batch.features.push_back(ex.features);
        batch.emotions.push_back(ex.emotion);
        auto it = spk_index.find(ex.speaker_id);
        batch.speakers.push_back(it == spk_index.end() ? 0 : it->second);
      }
      result.batches.push_back(trainer.step(batch));
    }

    auto preds = predict_emotions(model, fold.val);
    EpochSummary summary;
    summary.epoch = epoch;
    summary.val_WA = eval::weighted_accuracy(preds, val_labels);
    summary.val_UA = eval::unweighted_accuracy(preds, val_labels, fold.emotions.size());
    for (std::size_t i = first_report; i < result.batches.size(); ++i) {
      const auto& r = result.batches[i];
      summary.L_D_Spk += r.L_D_Spk / per_epoch;
      summary.L_H_Spk += r.L_H_Spk / per_epoch;
      summary.L_D_Emo += r.L_D_Emo / per_epoch;
      summary.L_total += r.L_total / per_epoch;
      if (log) {
        log << report_row(epoch, i - first_report, r, summary.val_WA, summary.val_UA).dump()
            << '\n';
      }
    }
    result.epochs.push_back(summary);
    if (!best || summary.val_UA >= result.best_val_UA) {  // ties go to the later epoch
      result.best_epoch = epoch;
      result.best_val_UA = summary.val_UA;
      info.epoch = epoch;
      best = make_checkpoint(model, info, &trainer);
    }
  }

  restore_checkpoint(*best, model);
  if (out_dir) nx::write_checkpoint(*out_dir / "best.ckpt", *best);
  return result;
}

}  // namespace menan::training
