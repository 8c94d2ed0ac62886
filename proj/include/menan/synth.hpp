#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "menan/audio.hpp"
#include "menan/corpus.hpp"

namespace menan::synth {

/// Desk-scale stand-in for a session-structured emotional speech corpus.
///
/// Every utterance is a harmonic complex (6 partials, 1/k amplitudes) under
/// a sinusoidal amplitude envelope, plus white noise:
///   - speaker s fixes the fundamental: a geometric ladder of centers from
///     90 Hz to 300 Hz, jittered by at most ±3% per utterance;
///   - emotion e fixes the envelope: rate 2 + 1.5e Hz (±0.4 Hz) and depth
///     0.2 + 0.6e/(E-1) (±0.05).
/// Gain, duration, phases and noise are nuisance draws. Speakers and
/// emotions are crossed in a full factorial design, so the two factors are
/// independent.
struct SynthConfig {
  std::size_t n_speakers = 10;
  std::size_t n_emotions = 4;
  std::size_t n_per_cell = 30;
  std::uint64_t seed = 0;
  double min_seconds = 3.0;
  double max_seconds = 8.0;
  double noise_sigma = 0.01;
  double pitch_jitter = 0.03;  // half-width of the per-utterance log-f0 offset
};

/// Latent generating parameters of one utterance.
struct SynthFactors {
  std::string id;
  std::size_t speaker = 0;
  std::size_t emotion = 0;
  double f0_hz = 0.0;
  double mod_rate_hz = 0.0;
  double mod_depth = 0.0;
  double gain = 0.0;
};

struct SynthCorpus {
  corpus::Manifest manifest;
  std::vector<dsp::Waveform> waves;  // parallel to manifest.rows
  std::vector<SynthFactors> factors;
};

double speaker_pitch_center(std::size_t speaker, std::size_t n_speakers);
double emotion_mod_rate(std::size_t emotion);
double emotion_mod_depth(std::size_t emotion, std::size_t n_emotions);

/// Speaker ids follow "S<session>_<A|B>", two speakers per session.
std::string speaker_name(std::size_t speaker);
std::string emotion_name(std::size_t emotion, std::size_t n_emotions);

/// Throws ParameterError unless n_speakers >= 4 and n_emotions >= 2.
SynthCorpus generate_synthetic(const SynthConfig& config);

/// Closed-form inverse of the generator on clean factors:
/// speaker = nearest pitch center in log frequency, emotion = nearest
/// nominal modulation rate. Returns (speaker, emotion).
std::pair<std::size_t, std::size_t> oracle_labels(const SynthFactors& factors,
                                                  const SynthConfig& config);

/// Writes wav/<id>.wav, manifest.csv (paths relative to `dir`) and
/// factors.csv.
void write_synthetic(const std::filesystem::path& dir, const SynthCorpus& corpus);

}  // namespace menan::synth
