#include "menan/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "menan/error.hpp"

namespace menan::corpus {

std::string feature_key(const std::string& utterance_id, double ratio) {
  if (ratio == 1.0) return utterance_id;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "@sp%g", ratio);
  return utterance_id + buf;
}

dsp::FeatureMatrix utterance_features(const dsp::Waveform& wave, double ratio,
                                      double target_seconds) {
  return dsp::extract_features(
      normalize_length(speed_perturb(wave, ratio), target_seconds));
}

namespace {

std::vector<double> with_original(const std::vector<double>& ratios) {
  std::vector<double> all{1.0};
  for (double r : ratios)
    if (r != 1.0) all.push_back(r);
  return all;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
/// failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

FeatureStore build_features(const Manifest& manifest,
                            const std::vector<dsp::Waveform>& waves,
                            const FeatureOptions& options) {
  if (waves.size() != manifest.rows.size()) {
    throw UsageError("waveform count does not match the manifest");
  }
  const auto ratios = with_original(options.speed_ratios);
  std::vector<dsp::FeatureMatrix> results(waves.size() * ratios.size());
  parallel_for(results.size(), options.jobs, [&](std::size_t i) {
    results[i] = utterance_features(waves[i / ratios.size()], ratios[i % ratios.size()],
                                    options.target_seconds);
  });
  FeatureStore store;
  for (std::size_t i = 0; i < results.size(); ++i) {
    store.emplace(feature_key(manifest.rows[i / ratios.size()].id, ratios[i % ratios.size()]),
                  std::move(results[i]));
  }
  return store;
}

void extract_corpus(const Manifest& manifest, const std::filesystem::path& audio_root,
                    const std::filesystem::path& out_dir, const FeatureOptions& options) {
  std::filesystem::create_directories(out_dir);
  const auto ratios = with_original(options.speed_ratios);
  parallel_for(manifest.rows.size(), options.jobs, [&](std::size_t i) {
    const auto& row = manifest.rows[i];
    std::filesystem::path audio = row.path;
    if (audio.is_relative()) audio = audio_root / audio;
    const auto wave = dsp::read_wav(audio);
    for (double r : ratios) {
      dsp::write_features(out_dir / (feature_key(row.id, r) + ".feat"),
                          utterance_features(wave, r, options.target_seconds));
    }
  });
}

FeatureStore load_features(const Manifest& manifest, const std::filesystem::path& dir,
                           const std::vector<double>& speed_ratios) {
  FeatureStore store;
  for (const auto& row : manifest.rows) {
    for (double r : with_original(speed_ratios)) {
      auto key = feature_key(row.id, r);
      store.emplace(key, dsp::read_features(dir / (key + ".feat")));
    }
  }
  return store;
}

FoldData assemble_fold(const Manifest& manifest, const FeatureStore& store,
                       const FoldSpec& fold, const std::vector<double>& speed_ratios) {
  FoldData data;
  data.spec = fold;
  data.emotions = manifest.emotions;
  auto lookup = [&](const std::string& key) {
    auto it = store.find(key);
    if (it == store.end()) throw IoError("no features for '" + key + "'");
    return &it->second;
  };
  const auto is_train = [&](const std::string& s) {
    return std::find(fold.train_speakers.begin(), fold.train_speakers.end(), s) !=
           fold.train_speakers.end();
  };
  for (const auto& row : manifest.rows) {
    Example ex{row.id, row.id, row.speaker_id, manifest.emotion_index(row.emotion),
               lookup(row.id)};
    if (row.speaker_id == fold.val_speaker) {
      data.val.push_back(ex);
    } else if (row.speaker_id == fold.test_speaker) {
      data.test.push_back(ex);
    } else if (is_train(row.speaker_id)) {
      data.train.push_back(ex);
      data.train_originals.push_back(ex);
      for (double r : speed_ratios) {
        if (r == 1.0) continue;
        Example aug = ex;
        aug.key = feature_key(row.id, r);
        aug.features = lookup(aug.key);
        data.train.push_back(std::move(aug));
      }
    }
  }
  if (data.train.empty() || data.val.empty() || data.test.empty()) {
    throw ConfigError("fold " + std::to_string(fold.index) + " has an empty split");
  }
  return data;
}

}  // namespace menan::corpus
