#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "dsp_oracles.hpp"
#include "menan/corpus.hpp"
#include "menan/dataset.hpp"
#include "menan/error.hpp"
#include "menan/synth.hpp"

using namespace menan;
using namespace menan::corpus;
namespace ts = menan::test_support;

namespace {

dsp::Waveform ramp(std::size_t n) {
  dsp::Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(static_cast<double>(i));
  return w;
}

/// Frequency of the largest DFT magnitude on a 0.25 Hz grid in [lo, hi].
double peak_frequency(const std::vector<double>& s, double lo, double hi) {
  double best_f = lo, best = -1.0;
  for (double f = lo; f <= hi; f += 0.25) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < s.size(); ++n)
      acc += s[n] * std::polar(1.0, -2.0 * std::numbers::pi * f * n / 16000.0);
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_f = f;
    }
  }
  return best_f;
}

std::vector<SpeakerSession> five_sessions() {
  std::vector<SpeakerSession> s;
  for (int i = 0; i < 10; ++i) s.push_back({synth::speaker_name(i), session_of(synth::speaker_name(i))});
  return s;
}

}  // namespace

TEST(NormalizeLength, LongInputKeepsCenter) {
  auto out = normalize_length(ramp(20 * 16000));
  ASSERT_EQ(out.samples.size(), 224000u);
  EXPECT_EQ(out.samples.front(), 3.0 * 16000);
  EXPECT_EQ(out.samples.back(), 17.0 * 16000 - 1);
}

TEST(NormalizeLength, ShortInputCycles) {
  auto out = normalize_length(ramp(5 * 16000));
  ASSERT_EQ(out.samples.size(), 224000u);
  EXPECT_EQ(out.samples[0], 0.0);
  EXPECT_EQ(out.samples[80000], 0.0);
  EXPECT_EQ(out.samples[160000], 0.0);
  EXPECT_EQ(out.samples[79999], 79999.0);
  EXPECT_EQ(out.samples.back(), 4.0 * 16000 - 1);
}

TEST(NormalizeLength, ExactLengthIsIdentity) {
  auto in = ramp(224000);
  EXPECT_EQ(normalize_length(in).samples, in.samples);
}

TEST(NormalizeLength, EmptyRaises) {
  EXPECT_THROW(normalize_length(dsp::Waveform{}), LengthError);
}

TEST(NormalizeLength, AlwaysTargetLength) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> len(1, 400000);
  for (int i = 0; i < 30; ++i) {
    EXPECT_EQ(normalize_length(ramp(len(rng))).samples.size(), 224000u);
  }
}

TEST(SpeedPerturb, DurationScales) {
  dsp::Waveform w{std::vector<double>(160000, 0.0), 16000};
  EXPECT_EQ(speed_perturb(w, 0.8).samples.size(), 200000u);
  EXPECT_NEAR(speed_perturb(w, 1.2).duration_s(), 10.0 / 1.2, 1e-4);
}

TEST(SpeedPerturb, UnitRatioIsIdentity) {
  dsp::Waveform w{ts::sine(200.0, 0.5), 16000};
  EXPECT_EQ(speed_perturb(w, 1.0).samples, w.samples);
}

TEST(SpeedPerturb, PitchFollowsSpeed) {
  dsp::Waveform w{ts::sine(200.0, 0.5), 16000};
  auto fast = speed_perturb(w, 1.1);
  EXPECT_NEAR(peak_frequency(fast.samples, 150.0, 300.0), 220.0, 1.0);
  auto slow = speed_perturb(w, 0.8);
  EXPECT_NEAR(peak_frequency(slow.samples, 100.0, 300.0), 160.0, 1.0);
}

TEST(SpeedPerturb, NonPositiveRatioRaises) {
  dsp::Waveform w{ts::sine(200.0, 0.1), 16000};
  EXPECT_THROW(speed_perturb(w, 0.0), ParameterError);
  EXPECT_THROW(speed_perturb(w, -1.0), ParameterError);
}

TEST(Sessions, DerivedFromSpeakerIds) {
  EXPECT_EQ(session_of("S03_B"), "S03");
  EXPECT_EQ(session_of("Ses01F"), "Ses01");
}

TEST(Folds, FiveSessionsGiveTenFolds) {
  auto folds = make_folds(five_sessions());
  ASSERT_EQ(folds.size(), 10u);
  for (const auto& f : folds) {
    EXPECT_EQ(f.train_speakers.size(), 8u);
    EXPECT_NE(f.val_speaker, f.test_speaker);
    EXPECT_EQ(session_of(f.val_speaker), session_of(f.test_speaker));
    std::set<std::string> all(f.train_speakers.begin(), f.train_speakers.end());
    EXPECT_FALSE(all.count(f.val_speaker));
    EXPECT_FALSE(all.count(f.test_speaker));
    all.insert(f.val_speaker);
    all.insert(f.test_speaker);
    EXPECT_EQ(all.size(), 10u);
  }
  EXPECT_EQ(folds[0].val_speaker, folds[1].test_speaker);
  EXPECT_EQ(folds[0].test_speaker, folds[1].val_speaker);
}

TEST(Folds, SpeakerInTwoSessionsRejected) {
  auto s = five_sessions();
  s.push_back({"S01_A", "S02"});
  EXPECT_THROW(make_folds(s), ManifestError);
}

TEST(Folds, UnpairedSessionRejected) {
  auto s = five_sessions();
  s.push_back({"S06_A", "S06"});
  EXPECT_THROW(make_folds(s), ManifestError);
}

TEST(Folds, JsonRoundTrip) {
  auto folds = make_folds(five_sessions());
  auto path = std::filesystem::temp_directory_path() / "menan_folds.json";
  write_folds(path, folds);
  auto back = read_folds(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), folds.size());
  EXPECT_EQ(back[7].train_speakers, folds[7].train_speakers);
  EXPECT_EQ(back[7].val_speaker, folds[7].val_speaker);
}

TEST(Manifest, RoundTripAndHeaderCheck) {
  Manifest m;
  m.rows = {{"u1", "a/u1.wav", "S01_A", "sad", 3.5}, {"u,2", "b.wav", "S01_B", "angry", 1.0}};
  finalize(m);
  EXPECT_EQ(m.emotions, (std::vector<std::string>{"angry", "sad"}));
  auto path = std::filesystem::temp_directory_path() / "menan_manifest.csv";
  write_manifest(path, m);
  auto back = read_manifest(path);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].id, "u,2");
  EXPECT_DOUBLE_EQ(back.rows[0].duration_s, 3.5);
  { std::ofstream(path) << "id,path,speaker,emotion,duration_s\n"; }
  EXPECT_THROW(read_manifest(path), ManifestError);
  std::filesystem::remove(path);
}

TEST(Synthetic, DeterministicForFixedSeed) {
  synth::SynthConfig cfg{.n_speakers = 4, .n_emotions = 2, .n_per_cell = 2, .seed = 7,
                         .min_seconds = 0.5, .max_seconds = 1.0};
  auto a = synth::generate_synthetic(cfg);
  auto b = synth::generate_synthetic(cfg);
  ASSERT_EQ(a.waves.size(), 16u);
  for (std::size_t i = 0; i < a.waves.size(); ++i) EXPECT_EQ(a.waves[i].samples, b.waves[i].samples);
  cfg.seed = 8;
  auto c = synth::generate_synthetic(cfg);
  EXPECT_NE(a.waves[0].samples, c.waves[0].samples);
}

TEST(Synthetic, OracleRecoversEveryLabel) {
  synth::SynthConfig cfg{.n_per_cell = 30, .seed = 3, .min_seconds = 0.05, .max_seconds = 0.06};
  auto corpus = synth::generate_synthetic(cfg);
  ASSERT_EQ(corpus.factors.size(), 1200u);
  for (const auto& f : corpus.factors) {
    auto [s, e] = synth::oracle_labels(f, cfg);
    EXPECT_EQ(s, f.speaker);
    EXPECT_EQ(e, f.emotion);
  }
}

TEST(Synthetic, FactorsUncorrelated) {
  synth::SynthConfig cfg{.n_per_cell = 30, .seed = 5, .min_seconds = 0.05, .max_seconds = 0.06};
  auto corpus = synth::generate_synthetic(cfg);
  const double n = static_cast<double>(corpus.factors.size());
  double ms = 0, me = 0;
  for (const auto& f : corpus.factors) {
    ms += f.speaker / n;
    me += f.emotion / n;
  }
  double cov = 0, vs = 0, ve = 0;
  for (const auto& f : corpus.factors) {
    cov += (f.speaker - ms) * (f.emotion - me);
    vs += (f.speaker - ms) * (f.speaker - ms);
    ve += (f.emotion - me) * (f.emotion - me);
  }
  EXPECT_LT(std::abs(cov / std::sqrt(vs * ve)), 0.05);
}

TEST(Synthetic, RejectsTooFewSpeakers) {
  EXPECT_THROW(synth::generate_synthetic({.n_speakers = 3}), ParameterError);
  EXPECT_THROW(synth::generate_synthetic({.n_emotions = 1}), ParameterError);
}

TEST(Dataset, AugmentationConfinedToTraining) {
  synth::SynthConfig cfg{.n_speakers = 4, .n_emotions = 2, .n_per_cell = 2, .seed = 1,
                         .min_seconds = 0.3, .max_seconds = 0.5};
  auto corpus = synth::generate_synthetic(cfg);
  FeatureOptions opt{.target_seconds = 0.5};
  auto store = build_features(corpus.manifest, corpus.waves, opt);
  EXPECT_EQ(store.size(), 16u * 5u);
  auto folds = make_folds(session_table(corpus.manifest));
  ASSERT_EQ(folds.size(), 4u);
  auto data = assemble_fold(corpus.manifest, store, folds[0], opt.speed_ratios);
  EXPECT_EQ(data.train.size(), 8u * 5u);
  EXPECT_EQ(data.train_originals.size(), 8u);
  for (const auto& ex : data.val) EXPECT_EQ(ex.key, ex.utterance_id);
  for (const auto& ex : data.test) EXPECT_EQ(ex.key, ex.utterance_id);
  for (const auto& ex : data.train) {
    EXPECT_NE(ex.speaker_id, folds[0].val_speaker);
    EXPECT_NE(ex.speaker_id, folds[0].test_speaker);
    EXPECT_EQ(ex.features->frames, dsp::frame_count(8000));
  }
}

TEST(Dataset, DiskPipelineMatchesMemoryForAnyJobCount) {
  synth::SynthConfig cfg{.n_speakers = 4, .n_emotions = 2, .n_per_cell = 1, .seed = 2,
                         .min_seconds = 0.3, .max_seconds = 0.5};
  auto corpus = synth::generate_synthetic(cfg);
  auto dir = std::filesystem::temp_directory_path() / "menan_ds_test";
  std::filesystem::remove_all(dir);
  synth::write_synthetic(dir, corpus);
  auto manifest = read_manifest(dir / "manifest.csv");
  FeatureOptions one{.target_seconds = 0.5, .speed_ratios = {0.9}, .jobs = 1};
  FeatureOptions three = one;
  three.jobs = 3;
  extract_corpus(manifest, dir, dir / "f1", one);
  extract_corpus(manifest, dir, dir / "f3", three);
  auto a = load_features(manifest, dir / "f1", one.speed_ratios);
  auto b = load_features(manifest, dir / "f3", one.speed_ratios);
  ASSERT_EQ(a.size(), 16u);
  for (const auto& [key, f] : a) EXPECT_EQ(f.data, b.at(key).data) << key;
  EXPECT_THROW(load_features(manifest, dir / "missing", {}), IoError);
  std::filesystem::remove_all(dir);
}
