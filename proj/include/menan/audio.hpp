#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace menan::dsp {

inline constexpr int kSampleRate = 16000;

/// Mono PCM in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Reads a RIFF/WAVE file with 16-bit PCM samples. Multi-channel input is
/// averaged to mono and any other rate is resampled to 16 kHz.
Waveform read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Hann-windowed sinc interpolation. Output sample j is the band-limited
/// value of the input at position j * step (in input samples). The
/// low-pass cutoff is 0.95 * min(1, 1/step) of the input Nyquist rate, with
/// 16 zero crossings of the sinc on each side.
std::vector<double> resample(const std::vector<double>& input, double step,
                             std::size_t output_length);

/// Converts to 16 kHz; identity when the rate already matches.
Waveform to_16k(const Waveform& wave);

}  // namespace menan::dsp
