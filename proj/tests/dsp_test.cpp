#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dsp_oracles.hpp"
#include "menan/audio.hpp"
#include "menan/error.hpp"
#include "menan/features.hpp"

using namespace menan;
using namespace menan::dsp;
namespace ts = menan::test_support;

namespace {

Waveform wave_of(std::vector<double> s) { return Waveform{std::move(s), kSampleRate}; }

Waveform white_noise(std::size_t n, std::uint64_t seed, double sigma = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<double> s(n);
  for (auto& x : s) x = d(rng);
  return wave_of(std::move(s));
}

}  // namespace

TEST(Framing, FrameCounts) {
  EXPECT_EQ(frame_count(640), 1u);
  EXPECT_EQ(frame_count(800), 2u);
  EXPECT_EQ(frame_count(224000), 1397u);
  EXPECT_EQ(frame_count(639), 0u);
  EXPECT_EQ(frame_signal(wave_of(std::vector<double>(800))).size(), 2u);
}

TEST(Framing, TooShortRaises) {
  EXPECT_THROW(frame_signal(wave_of(std::vector<double>(639))), LengthError);
  EXPECT_THROW(extract_features(wave_of({})), LengthError);
}

TEST(MelFbank, MelScaleAt700Hz) {
  EXPECT_NEAR(hz_to_mel(700.0), 781.17, 0.01);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(MelFbank, SilenceHitsFloor) {
  std::vector<double> frame(kWindowSamples, 0.0);
  for (double v : log_mel_fbank(frame)) EXPECT_EQ(v, std::log(1e-10));
}

TEST(MelFbank, MatchesDirectDft) {
  std::mt19937_64 rng(11);
  auto noise = white_noise(kWindowSamples, 4);
  auto fast = log_mel_fbank(noise.samples);
  auto slow = ts::direct_log_mel(noise.samples);
  for (std::size_t j = 0; j < kMelBands; ++j) EXPECT_NEAR(fast[j], slow[j], 1e-8);
}

TEST(MelFbank, ToneLandsInNearestBand) {
  auto tone = ts::sine(1000.0, 0.04);
  auto fast = log_mel_fbank(tone);
  auto slow = ts::direct_log_mel(tone);
  auto centers = mel_band_centers();
  std::size_t nearest = 0;
  for (std::size_t j = 1; j < kMelBands; ++j)
    if (std::abs(centers[j] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = j;
  EXPECT_EQ(ts::argmax(fast), nearest);
  EXPECT_EQ(ts::argmax(slow), nearest);
}

TEST(Pitch, SineAt200Hz) {
  auto frames = nccf_pitch(wave_of(ts::sine(200.0, 0.5)));
  ASSERT_FALSE(frames.empty());
  for (const auto& p : frames) {
    EXPECT_NEAR(p.f0, 200.0, 5.0);
    EXPECT_GT(p.nccf, 0.9);
  }
}

TEST(Pitch, ToneSweepWithinFiveHz) {
  for (double hz = 60.0; hz <= 400.0; hz += 7.0) {
    for (const auto& p : nccf_pitch(wave_of(ts::sine(hz, 0.1, 0.3, 0.4)))) {
      EXPECT_NEAR(p.f0, hz, 5.0) << "tone " << hz;
    }
  }
}

TEST(Pitch, WhiteNoiseMostlyUnvoiced) {
  auto frames = nccf_pitch(white_noise(16000, 21));
  std::size_t unvoiced = 0;
  for (const auto& p : frames)
    if (p.nccf < kVoicingThreshold) {
      ++unvoiced;
      EXPECT_EQ(p.f0, 0.0);
    }
  EXPECT_GT(unvoiced * 2, frames.size());
}

TEST(Pitch, SilenceIsUnvoiced) {
  for (const auto& p : nccf_pitch(wave_of(std::vector<double>(4000, 0.0)))) {
    EXPECT_EQ(p.f0, 0.0);
    EXPECT_EQ(p.nccf, 0.0);
  }
}

TEST(Pitch, FastCurveAgreesWithBruteForce) {
  for (double f0 : {71.0, 118.5, 163.0, 207.0, 289.0, 377.0}) {
    const auto sig = wave_of(ts::harmonic(f0, 0.1));
    for (auto frame : frame_signal(sig)) {
      auto fast = nccf_curve(frame);
      auto slow = ts::brute_force_nccf(frame);
      ASSERT_EQ(fast.size(), slow.size());
      for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], slow[i], 1e-12);
      auto a = pick_pitch(fast), b = pick_pitch(slow);
      EXPECT_EQ(a.lag, b.lag);
      EXPECT_NEAR(a.f0, f0, 5.0);
    }
  }
}

TEST(Pitch, NccfBoundedOnRandomSignals) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(2000);
    double drift = u(rng);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.5 * u(rng) + drift * std::sin(i * 0.05);
    const auto w = wave_of(s);
    for (auto frame : frame_signal(w))
      for (double v : nccf_curve(frame)) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
      }
  }
}

TEST(Features, ShapeAndDeterminism) {
  auto w = wave_of(ts::harmonic(150.0, 14.0));
  auto a = extract_features(w);
  auto b = extract_features(w);
  EXPECT_EQ(a.frames, 1397u);
  EXPECT_EQ(a.data.size(), 1397u * 43u);
  EXPECT_EQ(a.data, b.data);
}

TEST(Features, AmplitudeDoublingShiftsByLogGain) {
  auto base = ts::harmonic(180.0, 0.3);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.01);
  for (auto& s : base) s += n(rng);
  auto doubled = base;
  for (auto& s : doubled) s *= 2.0;
  auto a = extract_features(wave_of(base));
  auto b = extract_features(wave_of(doubled));
  for (std::size_t t = 0; t < a.frames; ++t) {
    EXPECT_NEAR(b.at(t, kEnergyChannel) - a.at(t, kEnergyChannel), std::log(2.0), 1e-9);
    for (std::size_t j = 0; j < kMelBands; ++j)
      EXPECT_NEAR(b.at(t, j) - a.at(t, j), std::log(4.0), 1e-9);
    EXPECT_NEAR(b.at(t, kNccfChannel), a.at(t, kNccfChannel), 1e-12);
  }
}

TEST(Features, FileRoundTrip) {
  auto f = extract_features(wave_of(ts::sine(300.0, 0.2)));
  auto path = std::filesystem::temp_directory_path() / "menan_feat_test.bin";
  write_features(path, f);
  auto g = read_features(path);
  std::filesystem::remove(path);
  EXPECT_EQ(g.frames, f.frames);
  EXPECT_EQ(g.data, f.data);
}

TEST(Audio, WavRoundTripAndResample) {
  auto dir = std::filesystem::temp_directory_path();
  Waveform w = wave_of(ts::sine(440.0, 0.25, 0.5));
  write_wav(dir / "menan_a.wav", w);
  auto back = read_wav(dir / "menan_a.wav");
  ASSERT_EQ(back.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 16384.0);

  Waveform low{{}, 8000};
  for (std::size_t i = 0; i < 8000; ++i)
    low.samples.push_back(0.4 * std::sin(2.0 * std::numbers::pi * 250.0 * i / 8000.0));
  write_wav(dir / "menan_b.wav", low);
  auto up = read_wav(dir / "menan_b.wav");
  EXPECT_EQ(up.sample_rate, kSampleRate);
  EXPECT_EQ(up.samples.size(), 16000u);
  auto pitch = nccf_pitch(up);
  EXPECT_NEAR(pitch[pitch.size() / 2].f0, 250.0, 5.0);
  std::filesystem::remove(dir / "menan_a.wav");
  std::filesystem::remove(dir / "menan_b.wav");
}

TEST(Audio, MissingFileIsIoError) {
  EXPECT_THROW(read_wav("/nonexistent/x.wav"), IoError);
}
