#include "menan/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "menan/dataset.hpp"
#include "menan/error.hpp"
#include "menan/eval.hpp"
#include "menan/synth.hpp"
#include "menan/training.hpp"

namespace menan::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct RunConfig {
  std::string data_dir;
  std::string features_dir;
  std::string out_dir;
  std::string sessions;
  std::optional<std::size_t> fold;
  training::TrainConfig train;
  corpus::FeatureOptions features;
  synth::SynthConfig synth;
  eval::ProbeConfig probe;
};

double number(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

std::size_t count(const std::string& key, const std::string& text) {
  const double v = number(key, text);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<double> number_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto b = item.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(' ') - b + 1);
    out.push_back(number(key, item));
  }
  return out;
}

void apply_file(const training::KeyValues& kv, RunConfig& c) {
  training::apply_train_keys(kv, c.train);
  for (const auto& [key, value] : kv) {
    if (key == "regime" || key == "lambda" || key == "lr" || key == "batch_size" ||
        key == "epochs" || key == "decay_power") {
      continue;
    } else if (key == "seed") {
      c.synth.seed = c.train.seed;
      c.probe.seed = c.train.seed;
    } else if (key == "data_dir") {
      c.data_dir = value;
    } else if (key == "features_dir") {
      c.features_dir = value;
    } else if (key == "out_dir") {
      c.out_dir = value;
    } else if (key == "sessions") {
      c.sessions = value;
    } else if (key == "fold") {
      c.fold = count(key, value);
    } else if (key == "jobs") {
      c.features.jobs = count(key, value);
    } else if (key == "target_seconds") {
      c.features.target_seconds = number(key, value);
    } else if (key == "speed_ratios") {
      c.features.speed_ratios = number_list(key, value);
    } else if (key == "probe_epochs") {
      c.probe.max_epochs = count(key, value);
    } else if (key == "synth.n_speakers") {
      c.synth.n_speakers = count(key, value);
    } else if (key == "synth.n_emotions") {
      c.synth.n_emotions = count(key, value);
    } else if (key == "synth.n_per_cell") {
      c.synth.n_per_cell = count(key, value);
    } else if (key == "synth.min_seconds") {
      c.synth.min_seconds = number(key, value);
    } else if (key == "synth.max_seconds") {
      c.synth.max_seconds = number(key, value);
    } else if (key == "synth.noise_sigma") {
      c.synth.noise_sigma = number(key, value);
    } else if (key == "synth.pitch_jitter") {
      c.synth.pitch_jitter = number(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

json resolved(const std::string& verb, const RunConfig& c) {
  json j;
  j["verb"] = verb;
  j["seed"] = c.train.seed;
  j["data_dir"] = c.data_dir;
  j["features_dir"] = c.features_dir;
  j["out_dir"] = c.out_dir;
  j["sessions"] = c.sessions;
  if (c.fold) j["fold"] = *c.fold;
  j["regime"] = training::regime_name(c.train.regime);
  j["lambda"] = c.train.lambda;
  j["lr"] = c.train.lr;
  j["batch_size"] = c.train.batch_size;
  j["epochs"] = c.train.epochs;
  j["decay_power"] = c.train.decay_power;
  j["target_seconds"] = c.features.target_seconds;
  j["speed_ratios"] = c.features.speed_ratios;
  j["jobs"] = c.features.jobs;
  j["probe_epochs"] = c.probe.max_epochs;
  j["synth"] = {{"n_speakers", c.synth.n_speakers},   {"n_emotions", c.synth.n_emotions},
                {"n_per_cell", c.synth.n_per_cell},   {"min_seconds", c.synth.min_seconds},
                {"max_seconds", c.synth.max_seconds}, {"noise_sigma", c.synth.noise_sigma},
                {"pitch_jitter", c.synth.pitch_jitter}};
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_run_manifest(const fs::path& dir, const std::string& verb, const RunConfig& c) {
  fs::create_directories(dir);
  write_text(dir / (verb + ".run.json"), resolved(verb, c).dump(2) + "\n");
}

fs::path require_data_dir(const RunConfig& c) {
  if (c.data_dir.empty()) {
    throw ConfigError("no dataset root: set data_dir in the config or MENAN_DATA_DIR");
  }
  return c.data_dir;
}

fs::path require_out_dir(const RunConfig& c) {
  if (c.out_dir.empty()) throw ConfigError("no output directory: pass --out DIR");
  return c.out_dir;
}

fs::path features_dir(const RunConfig& c) {
  return c.features_dir.empty() ? require_data_dir(c) / "features" : fs::path(c.features_dir);
}

corpus::Manifest load_manifest(const RunConfig& c) {
  auto path = require_data_dir(c) / "manifest.csv";
  if (!fs::exists(path)) throw IoError("missing manifest " + path.string());
  return corpus::read_manifest(path);
}

std::vector<corpus::FoldSpec> load_folds(const RunConfig& c, const corpus::Manifest& manifest) {
  auto sessions = c.sessions.empty() ? corpus::session_table(manifest)
                                     : corpus::read_sessions(c.sessions);
  return corpus::make_folds(sessions);
}

std::vector<corpus::FoldSpec> selected(const RunConfig& c,
                                       const std::vector<corpus::FoldSpec>& folds) {
  if (!c.fold) return folds;
  if (*c.fold >= folds.size()) {
    throw ConfigError("fold " + std::to_string(*c.fold) + " out of range (" +
                      std::to_string(folds.size()) + " folds)");
  }
  return {folds[*c.fold]};
}

int run_synth(const RunConfig& c, std::ostream& out) {
  fs::path dir = c.out_dir.empty() ? require_data_dir(c) : fs::path(c.out_dir);
  auto corpus = synth::generate_synthetic(c.synth);
  synth::write_synthetic(dir, corpus);
  write_run_manifest(dir, "synth", c);
  out << "wrote " << corpus.manifest.rows.size() << " utterances to " << dir.string() << "\n";
  return kOk;
}

int run_extract(const RunConfig& c, std::ostream& out) {
  auto manifest = load_manifest(c);
  auto dir = c.out_dir.empty() ? features_dir(c) : fs::path(c.out_dir);
  corpus::extract_corpus(manifest, require_data_dir(c), dir, c.features);
  corpus::write_folds(dir / "folds.json", load_folds(c, manifest));
  write_run_manifest(dir, "extract", c);
  out << "wrote features for " << manifest.rows.size() << " utterances to " << dir.string()
      << "\n";
  return kOk;
}

int run_train(const RunConfig& c, std::ostream& out) {
  c.train.validate();
  auto root = require_out_dir(c);
  auto manifest = load_manifest(c);
  auto folds = selected(c, load_folds(c, manifest));
  auto store = corpus::load_features(manifest, features_dir(c), c.features.speed_ratios);
  write_run_manifest(root, "train", c);
  for (const auto& spec : folds) {
    auto fold = corpus::assemble_fold(manifest, store, spec, c.features.speed_ratios);
    auto model = training::make_model(fold, c.train.regime, c.train.seed);
    auto dir = root / ("fold_" + std::to_string(spec.index));
    auto result = training::train(*model, fold, c.train, dir);
    out << "fold " << spec.index << ": best epoch " << result.best_epoch << ", val UA "
        << result.best_val_UA << "\n";
  }
  return kOk;
}

struct TrainedFold {
  corpus::FoldData fold;
  training::LoadedModel loaded;
};

/// Every selected fold with a checkpoint under the run directory; throws
/// IoError when none is present.
template <typename Fn>
void for_each_trained_fold(const RunConfig& c, Fn&& fn) {
  auto root = require_out_dir(c);
  auto manifest = load_manifest(c);
  auto folds = selected(c, load_folds(c, manifest));
  std::vector<std::pair<corpus::FoldSpec, fs::path>> found;
  for (const auto& spec : folds) {
    auto ckpt = root / ("fold_" + std::to_string(spec.index)) / "best.ckpt";
    if (fs::exists(ckpt)) {
      found.emplace_back(spec, ckpt);
    } else if (c.fold) {
      throw IoError("missing checkpoint " + ckpt.string());
    }
  }
  if (found.empty()) throw IoError("no checkpoint found under " + root.string());
  auto store = corpus::load_features(manifest, features_dir(c), {});
  for (const auto& [spec, ckpt] : found) {
    auto loaded = training::load_model(ckpt);
    auto fold = corpus::assemble_fold(manifest, store, spec, {});
    fn(fold, loaded, root / ("fold_" + std::to_string(spec.index)), manifest);
  }
}

eval::ProbeConfig probe_for(const RunConfig& c, std::size_t fold) {
  eval::ProbeConfig p = c.probe;
  p.seed = c.probe.seed ^ (fold + 1);
  return p;
}

int run_evaluate(const RunConfig& c, std::ostream& out) {
  eval::CvReport report;
  for_each_trained_fold(c, [&](const corpus::FoldData& fold, training::LoadedModel& loaded,
                               const fs::path&, const corpus::Manifest&) {
    report.regime = training::regime_name(loaded.info.regime);
    auto r = eval::evaluate_fold(*loaded.model, fold, probe_for(c, fold.spec.index));
    r.best_epoch = loaded.info.epoch;
    report.folds.push_back(r);
  });
  eval::aggregate(report);
  auto root = require_out_dir(c);
  write_text(root / "report.json", eval::to_json(report).dump(2) + "\n");
  std::array<eval::CvReport, 1> one{report};
  const auto table = eval::format_table(one);
  write_text(root / "report.txt", table);
  write_run_manifest(root, "evaluate", c);
  out << table;
  return kOk;
}

int run_probe(const RunConfig& c, std::ostream& out) {
  json folds = json::array();
  for_each_trained_fold(c, [&](const corpus::FoldData& fold, training::LoadedModel& loaded,
                               const fs::path&, const corpus::Manifest&) {
    const double acc = eval::probe_fold(*loaded.model, fold, probe_for(c, fold.spec.index));
    const double chance = 100.0 / static_cast<double>(fold.spec.train_speakers.size());
    folds.push_back({{"fold", fold.spec.index},
                     {"regime", training::regime_name(loaded.info.regime)},
                     {"probe_accuracy", acc},
                     {"chance", chance}});
    out << "fold " << fold.spec.index << ": probe " << acc << " (chance " << chance << ")\n";
  });
  auto root = require_out_dir(c);
  write_text(root / "probe.json", json{{"folds", folds}}.dump(2) + "\n");
  write_run_manifest(root, "probe", c);
  return kOk;
}

int run_export(const RunConfig& c, std::ostream& out) {
  for_each_trained_fold(c, [&](const corpus::FoldData& fold, training::LoadedModel& loaded,
                               const fs::path& dir, const corpus::Manifest& manifest) {
    std::vector<corpus::Example> all;
    for (const auto* split : {&fold.train_originals, &fold.val, &fold.test}) {
      all.insert(all.end(), split->begin(), split->end());
    }
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) position[manifest.rows[i].id] = i;
    std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
      return position.at(a.utterance_id) < position.at(b.utterance_id);
    });
    eval::export_embeddings(dir / "embeddings.csv", *loaded.model, all, fold.emotions);
    out << "wrote " << all.size() << " embeddings to " << (dir / "embeddings.csv").string()
        << "\n";
  });
  write_run_manifest(require_out_dir(c), "export-embeddings", c);
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Max-entropy adversarial speech emotion recognition toolkit", "menan"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, regime, out_dir;
  std::optional<std::size_t> fold, jobs;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--regime", regime, "ec_only | multitask | dat | menan");
  app.add_option("--fold", fold, "fold index (default: all folds)");
  app.add_option("--seed", seed, "seed for every random draw");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--jobs", jobs, "parallel workers for feature extraction");

  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"synth", "generate the synthetic corpus"},
      {"extract", "compute features and the fold table"},
      {"train", "train one regime on one or all folds"},
      {"evaluate", "score trained checkpoints (WA/UA, delta, probe)"},
      {"export-embeddings", "write embeddings of every utterance as CSV"},
      {"probe", "residual speaker information of trained encoders"}};
  for (const auto& [name, help] : verbs) app.add_subcommand(name, help);

  std::vector<const char*> argv{"menan"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "menan: " << e.what() << "\n";
    return kConfigError;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    RunConfig c;
    if (const char* env = std::getenv("MENAN_DATA_DIR")) c.data_dir = env;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw IoError("missing config " + config_path);
      apply_file(training::read_key_values(config_path), c);
    }
    if (!regime.empty()) c.train.regime = training::parse_regime(regime);
    if (fold) c.fold = fold;
    if (seed) {
      c.train.seed = *seed;
      c.synth.seed = *seed;
      c.probe.seed = *seed;
    }
    if (!out_dir.empty()) c.out_dir = out_dir;
    if (jobs) c.features.jobs = *jobs;

    if (verb == "synth") return run_synth(c, out);
    if (verb == "extract") return run_extract(c, out);
    if (verb == "train") return run_train(c, out);
    if (verb == "evaluate") return run_evaluate(c, out);
    if (verb == "probe") return run_probe(c, out);
    return run_export(c, out);
  } catch (const IoError& e) {
    err << "menan " << verb << ": " << e.what() << "\n";
    return kMissingFile;
  } catch (const fs::filesystem_error& e) {
    err << "menan " << verb << ": " << e.what() << "\n";
    return kMissingFile;
  } catch (const NumericError& e) {
    err << "menan " << verb << ": " << e.what() << "\n";
    return kNumericError;
  } catch (const ConfigError& e) {
    err << "menan " << verb << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const ParameterError& e) {
    err << "menan " << verb << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const ManifestError& e) {
    err << "menan " << verb << ": " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "menan " << verb << ": " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace menan::cli
