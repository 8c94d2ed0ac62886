#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "menan/audio.hpp"

namespace menan::dsp {

inline constexpr std::size_t kWindowSamples = 640;  // 40 ms
inline constexpr std::size_t kHopSamples = 160;     // 10 ms
inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kMelBands = 40;
inline constexpr std::size_t kFeatureChannels = 43;
inline constexpr std::size_t kEnergyChannel = 40;
inline constexpr std::size_t kPitchChannel = 41;
inline constexpr std::size_t kNccfChannel = 42;
inline constexpr double kPowerFloor = 1e-10;

inline constexpr double kMinPitchHz = 60.0;
inline constexpr double kMaxPitchHz = 400.0;
inline constexpr double kVoicingThreshold = 0.3;
/// A shorter lag replaces the global NCCF maximum when its local peak
/// reaches this fraction of it (suppresses picking a period multiple).
inline constexpr double kSubharmonicTolerance = 0.95;

/// T x 43 matrix, row-major. Columns: 0..39 log-MFB, 40 log energy,
/// 41 f0 in Hz (0 when unvoiced), 42 NCCF.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::vector<double> data;

  static constexpr std::size_t channels() { return kFeatureChannels; }
  std::span<const double> row(std::size_t t) const {
    return {data.data() + t * kFeatureChannels, kFeatureChannels};
  }
  double at(std::size_t t, std::size_t c) const {
    return data[t * kFeatureChannels + c];
  }
};

/// Number of full 40 ms frames at a 10 ms hop; 0 if shorter than a window.
std::size_t frame_count(std::size_t samples);

/// Splits into overlapping 640-sample frames. Throws LengthError when the
/// signal is shorter than one window.
std::vector<std::span<const double>> frame_signal(const Waveform& wave);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Center frequency in Hz of each triangular mel filter.
std::array<double, kMelBands> mel_band_centers();

/// Triangular filter weights over the kFftSize/2+1 power-spectrum bins.
const std::vector<std::array<double, kFftSize / 2 + 1>>& mel_filterbank();

/// Symmetric Hann window of kWindowSamples points.
const std::vector<double>& hann_window();

/// Hann window, zero-padded real FFT, power spectrum, mel filters,
/// floor at 1e-10, natural log.
std::array<double, kMelBands> log_mel_fbank(std::span<const double> frame);

/// Frame log energy: 0.5 * ln(sum s^2 + 1e-10), i.e. the log of the frame's
/// root-sum-square amplitude, so a gain g shifts it by ln g.
double log_energy(std::span<const double> frame);

struct PitchFrame {
  double f0 = 0.0;    // Hz, 0 when unvoiced
  double nccf = 0.0;  // value at the selected lag
  std::size_t lag = 0;
};

std::size_t min_pitch_lag();
std::size_t max_pitch_lag();
/// Correlation window length used for every lag (frame minus max lag).
std::size_t nccf_window();

/// NCCF of one frame at every lag in [min_pitch_lag, max_pitch_lag];
/// index 0 corresponds to min_pitch_lag.
std::vector<double> nccf_curve(std::span<const double> frame);

/// Lag choice and f0 from an NCCF curve (shared by the tracker and tests).
PitchFrame pick_pitch(std::span<const double> curve);

/// Per-frame pitch on the 40/10 ms grid.
std::vector<PitchFrame> nccf_pitch(const Waveform& wave);

/// [log-MFB | log-energy | f0 | nccf] per frame, without any normalisation.
FeatureMatrix extract_features(const Waveform& wave);

/// Feature file:
///   char[8] "MENANFT1" | u32 version (1) | u64 frames | u64 channels (43)
///   | f64 values, row-major, little-endian.
void write_features(const std::filesystem::path& path, const FeatureMatrix& f);
FeatureMatrix read_features(const std::filesystem::path& path);

}  // namespace menan::dsp
