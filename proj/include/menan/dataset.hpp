#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "menan/corpus.hpp"
#include "menan/features.hpp"

namespace menan::corpus {

struct FeatureOptions {
  double target_seconds = kTargetSeconds;
  /// Speed-perturbed copies made for every utterance (used for training
  /// splits only). Empty disables augmentation.
  std::vector<double> speed_ratios = kSpeedRatios;
  std::size_t jobs = 1;
};

/// "<id>" for the original, "<id>@sp<ratio>" for a perturbed copy.
std::string feature_key(const std::string& utterance_id, double ratio);

/// speed_perturb (ratio != 1) -> normalize_length -> extract_features.
dsp::FeatureMatrix utterance_features(const dsp::Waveform& wave, double ratio,
                                      double target_seconds);

using FeatureStore = std::map<std::string, dsp::FeatureMatrix>;

/// Features for every manifest row and every requested ratio, from
/// in-memory waveforms parallel to manifest.rows.
FeatureStore build_features(const Manifest& manifest,
                            const std::vector<dsp::Waveform>& waves,
                            const FeatureOptions& options);

/// Reads each row's audio (paths relative to `audio_root` unless absolute)
/// and writes `<out_dir>/<key>.feat` for all keys. Output is identical for
/// any job count.
void extract_corpus(const Manifest& manifest, const std::filesystem::path& audio_root,
                    const std::filesystem::path& out_dir, const FeatureOptions& options);

/// Loads the feature files written by extract_corpus. Throws IoError for a
/// missing file.
FeatureStore load_features(const Manifest& manifest, const std::filesystem::path& dir,
                           const std::vector<double>& speed_ratios);

struct Example {
  std::string key;
  std::string utterance_id;
  std::string speaker_id;
  std::size_t emotion = 0;
  const dsp::FeatureMatrix* features = nullptr;
};

struct FoldData {
  FoldSpec spec;
  std::vector<std::string> emotions;
  std::vector<Example> train;  // originals plus their perturbed copies
  std::vector<Example> train_originals;
  std::vector<Example> val;
  std::vector<Example> test;
};

/// Splits by speaker. Perturbed copies are attached only to training
/// utterances, so augmentation never crosses splits. Throws ConfigError on
/// an empty split.
FoldData assemble_fold(const Manifest& manifest, const FeatureStore& store,
                       const FoldSpec& fold, const std::vector<double>& speed_ratios);

}  // namespace menan::corpus
