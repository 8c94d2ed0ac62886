#include "menan/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "menan/binary_io.hpp"
#include "menan/error.hpp"

namespace menan::dsp {

namespace {

constexpr int kZeroCrossings = 16;
constexpr int kTableResolution = 1024;  // table entries per unit of the sinc argument
constexpr double kCutoffMargin = 0.95;

/// Windowed sinc sampled on a fine grid over [0, kZeroCrossings]; evaluated
/// by linear interpolation.
const std::vector<double>& kernel_table() {
  static const std::vector<double> table = [] {
    const int n = kZeroCrossings * kTableResolution + 2;
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) {
      double u = static_cast<double>(i) / kTableResolution;
      if (u >= kZeroCrossings) {
        t[i] = 0.0;
        continue;
      }
      double sinc = u == 0.0 ? 1.0
                             : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
      double window = 0.5 * (1.0 + std::cos(std::numbers::pi * u / kZeroCrossings));
      t[i] = sinc * window;
    }
    return t;
  }();
  return table;
}

double kernel(double u) {
  u = std::abs(u);
  if (u >= kZeroCrossings) return 0.0;
  const auto& t = kernel_table();
  double pos = u * kTableResolution;
  auto i = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(i);
  return t[i] + frac * (t[i + 1] - t[i]);
}

}  // namespace

std::vector<double> resample(const std::vector<double>& input, double step,
                             std::size_t output_length) {
  if (!(step > 0.0)) throw ParameterError("resample step must be positive");
  std::vector<double> out(output_length, 0.0);
  if (input.empty()) return out;
  const double cutoff = kCutoffMargin * std::min(1.0, 1.0 / step);
  const double half_width = kZeroCrossings / cutoff;
  const auto n = static_cast<std::ptrdiff_t>(input.size());
  for (std::size_t j = 0; j < output_length; ++j) {
    const double t = static_cast<double>(j) * step;
    auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    lo = std::max<std::ptrdiff_t>(lo, 0);
    hi = std::min<std::ptrdiff_t>(hi, n - 1);
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      acc += input[k] * kernel(cutoff * (t - static_cast<double>(k)));
    }
    out[j] = cutoff * acc;
  }
  return out;
}

Waveform to_16k(const Waveform& wave) {
  if (wave.sample_rate == kSampleRate) return wave;
  if (wave.sample_rate <= 0) throw ParameterError("invalid sample rate");
  const double step = static_cast<double>(wave.sample_rate) / kSampleRate;
  auto length = static_cast<std::size_t>(
      std::llround(static_cast<double>(wave.samples.size()) / step));
  return Waveform{resample(wave.samples, step, length), kSampleRate};
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char riff[4], wave_tag[4];
  if (!in.read(riff, 4) || std::memcmp(riff, "RIFF", 4) != 0) {
    throw IoError(path.string() + ": not a RIFF file");
  }
  io::read_pod<std::uint32_t>(in);
  if (!in.read(wave_tag, 4) || std::memcmp(wave_tag, "WAVE", 4) != 0) {
    throw IoError(path.string() + ": not a WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    char id[4];
    if (!in.read(id, 4)) throw IoError(path.string() + ": no data chunk");
    auto size = io::read_pod<std::uint32_t>(in);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = io::read_pod<std::uint16_t>(in);
      channels = io::read_pod<std::uint16_t>(in);
      rate = io::read_pod<std::uint32_t>(in);
      io::read_pod<std::uint32_t>(in);  // byte rate
      io::read_pod<std::uint16_t>(in);  // block align
      bits = io::read_pod<std::uint16_t>(in);
      in.seekg(size - 16 + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw IoError(path.string() + ": data before fmt chunk");
      if (format != 1 || bits != 16 || channels == 0) {
        throw IoError(path.string() + ": only 16-bit PCM is supported");
      }
      std::size_t frames = size / (2u * channels);
      std::vector<std::int16_t> raw(frames * channels);
      if (!in.read(reinterpret_cast<char*>(raw.data()),
                   static_cast<std::streamsize>(raw.size() * 2))) {
        throw IoError(path.string() + ": truncated data chunk");
      }
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) acc += raw[f * channels + c];
        w.samples[f] = acc / (32768.0 * channels);
      }
      return to_16k(w);
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  out.write("RIFF", 4);
  io::write_pod<std::uint32_t>(out, 36 + 2 * n);
  out.write("WAVEfmt ", 8);
  io::write_pod<std::uint32_t>(out, 16);
  io::write_pod<std::uint16_t>(out, 1);
  io::write_pod<std::uint16_t>(out, 1);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  io::write_pod<std::uint16_t>(out, 2);
  io::write_pod<std::uint16_t>(out, 16);
  out.write("data", 4);
  io::write_pod<std::uint32_t>(out, 2 * n);
  for (double s : wave.samples) {
    double clipped = std::clamp(s, -1.0, 1.0);
    auto q = static_cast<std::int16_t>(
        std::clamp<long>(std::lround(clipped * 32767.0), -32768, 32767));
    io::write_pod(out, q);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace menan::dsp
