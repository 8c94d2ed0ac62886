#include "menan/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numbers>

#include "menan/binary_io.hpp"
#include "menan/error.hpp"

namespace menan::dsp {

namespace {

constexpr std::size_t kBins = kFftSize / 2 + 1;

/// Owns one FFTW plan; execution through the new-array interface is
/// thread-safe, planning is not.
class RealFft {
 public:
  RealFft() {
    std::lock_guard lock(planner_mutex());
    in_ = fftw_alloc_real(kFftSize);
    out_ = fftw_alloc_complex(kBins);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in_, out_,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void power_spectrum(std::vector<double>& padded, std::vector<double>& power) const {
    std::vector<std::complex<double>> spec(kBins);
    fftw_execute_dft_r2c(plan_, padded.data(),
                         reinterpret_cast<fftw_complex*>(spec.data()));
    power.resize(kBins);
    for (std::size_t k = 0; k < kBins; ++k) power[k] = std::norm(spec[k]);
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

const RealFft& fft() {
  static const RealFft instance;
  return instance;
}

}  // namespace

std::size_t frame_count(std::size_t samples) {
  if (samples < kWindowSamples) return 0;
  return (samples - kWindowSamples) / kHopSamples + 1;
}

std::vector<std::span<const double>> frame_signal(const Waveform& wave) {
  const std::size_t n = frame_count(wave.samples.size());
  if (n == 0) {
    throw LengthError("signal of " + std::to_string(wave.samples.size()) +
                      " samples is shorter than one 640-sample window");
  }
  std::vector<std::span<const double>> frames;
  frames.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    frames.emplace_back(wave.samples.data() + t * kHopSamples, kWindowSamples);
  }
  return frames;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::array<double, kMelBands + 2> mel_edges_hz() {
  std::array<double, kMelBands + 2> edges{};
  const double lo = hz_to_mel(0.0);
  const double hi = hz_to_mel(kSampleRate / 2.0);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (kMelBands + 1));
  }
  return edges;
}

}  // namespace

std::array<double, kMelBands> mel_band_centers() {
  auto edges = mel_edges_hz();
  std::array<double, kMelBands> centers{};
  for (std::size_t j = 0; j < kMelBands; ++j) centers[j] = edges[j + 1];
  return centers;
}

const std::vector<std::array<double, kBins>>& mel_filterbank() {
  static const auto bank = [] {
    auto edges = mel_edges_hz();
    std::vector<std::array<double, kBins>> filters(kMelBands);
    for (std::size_t j = 0; j < kMelBands; ++j) {
      const double l = edges[j], c = edges[j + 1], u = edges[j + 2];
      for (std::size_t k = 0; k < kBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        double w = 0.0;
        if (f > l && f <= c) w = (f - l) / (c - l);
        else if (f > c && f < u) w = (u - f) / (u - c);
        filters[j][k] = w;
      }
    }
    return filters;
  }();
  return bank;
}

const std::vector<double>& hann_window() {
  static const auto window = [] {
    std::vector<double> w(kWindowSamples);
    for (std::size_t n = 0; n < kWindowSamples; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  (kWindowSamples - 1));
    }
    return w;
  }();
  return window;
}

std::array<double, kMelBands> log_mel_fbank(std::span<const double> frame) {
  if (frame.size() != kWindowSamples) {
    throw LengthError("log_mel_fbank expects a 640-sample frame");
  }
  const auto& window = hann_window();
  std::vector<double> padded(kFftSize, 0.0);
  for (std::size_t n = 0; n < kWindowSamples; ++n) padded[n] = frame[n] * window[n];
  std::vector<double> power;
  fft().power_spectrum(padded, power);
  std::array<double, kMelBands> out{};
  const auto& bank = mel_filterbank();
  for (std::size_t j = 0; j < kMelBands; ++j) {
    double e = 0.0;
    for (std::size_t k = 0; k < kBins; ++k) e += bank[j][k] * power[k];
    out[j] = std::log(std::max(e, kPowerFloor));
  }
  return out;
}

double log_energy(std::span<const double> frame) {
  double e = 0.0;
  for (double s : frame) e += s * s;
  return 0.5 * std::log(e + kPowerFloor);
}

std::size_t min_pitch_lag() {
  return static_cast<std::size_t>(std::floor(kSampleRate / kMaxPitchHz));
}
std::size_t max_pitch_lag() {
  return static_cast<std::size_t>(std::ceil(kSampleRate / kMinPitchHz));
}
std::size_t nccf_window() { return kWindowSamples - max_pitch_lag(); }

std::vector<double> nccf_curve(std::span<const double> frame) {
  if (frame.size() != kWindowSamples) {
    throw LengthError("nccf_curve expects a 640-sample frame");
  }
  const std::size_t lo = min_pitch_lag(), hi = max_pitch_lag();
  const std::size_t w = nccf_window();
  const double* x = frame.data();
  double e_ref = 0.0;
  for (std::size_t n = 0; n < w; ++n) e_ref += x[n] * x[n];
  // Energy of the lagged window, slid one sample per lag.
  double e_lag = 0.0;
  for (std::size_t n = 0; n < w; ++n) e_lag += x[lo + n] * x[lo + n];
  std::vector<double> curve(hi - lo + 1);
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    if (lag > lo) {
      e_lag += x[lag + w - 1] * x[lag + w - 1] - x[lag - 1] * x[lag - 1];
      e_lag = std::max(e_lag, 0.0);
    }
    double num = 0.0;
    for (std::size_t n = 0; n < w; ++n) num += x[n] * x[n + lag];
    double den = std::sqrt(e_ref * e_lag);
    double v = den > 0.0 ? num / den : 0.0;
    curve[lag - lo] = std::clamp(v, -1.0, 1.0);
  }
  return curve;
}

PitchFrame pick_pitch(std::span<const double> curve) {
  PitchFrame out;
  if (curve.empty()) return out;
  const std::size_t lo = min_pitch_lag();
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i] > curve[best]) best = i;
  const double peak = curve[best];
  if (peak < kVoicingThreshold) {
    out.nccf = peak;
    out.lag = lo + best;
    return out;
  }
  // Earliest local maximum close enough to the global one.
  for (std::size_t i = 0; i < best; ++i) {
    bool left = i == 0 || curve[i] >= curve[i - 1];
    bool right = curve[i] >= curve[i + 1];
    if (left && right && curve[i] >= kSubharmonicTolerance * peak) {
      best = i;
      break;
    }
  }
  double offset = 0.0;
  if (best > 0 && best + 1 < curve.size()) {
    const double a = curve[best - 1], b = curve[best], c = curve[best + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
  }
  out.lag = lo + best;
  out.nccf = curve[best];
  out.f0 = kSampleRate / (static_cast<double>(out.lag) + offset);
  return out;
}

std::vector<PitchFrame> nccf_pitch(const Waveform& wave) {
  auto frames = frame_signal(wave);
  std::vector<PitchFrame> out;
  out.reserve(frames.size());
  for (auto frame : frames) out.push_back(pick_pitch(nccf_curve(frame)));
  return out;
}

FeatureMatrix extract_features(const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) {
    throw ParameterError("features require 16 kHz input");
  }
  auto frames = frame_signal(wave);
  FeatureMatrix f;
  f.frames = frames.size();
  f.data.resize(f.frames * kFeatureChannels);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    double* row = f.data.data() + t * kFeatureChannels;
    auto mfb = log_mel_fbank(frames[t]);
    std::copy(mfb.begin(), mfb.end(), row);
    row[kEnergyChannel] = log_energy(frames[t]);
    auto pitch = pick_pitch(nccf_curve(frames[t]));
    row[kPitchChannel] = pitch.f0;
    row[kNccfChannel] = pitch.nccf;
  }
  return f;
}

namespace {
constexpr char kFeatMagic[8] = {'M', 'E', 'N', 'A', 'N', 'F', 'T', '1'};
}

void write_features(const std::filesystem::path& path, const FeatureMatrix& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kFeatMagic, 8);
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint64_t>(out, f.frames);
  io::write_pod<std::uint64_t>(out, kFeatureChannels);
  io::write_doubles(out, f.data);
  if (!out) throw IoError("failed writing " + path.string());
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kFeatMagic)) {
    throw IoError(path.string() + " is not a feature file");
  }
  if (io::read_pod<std::uint32_t>(in) != 1) {
    throw IoError(path.string() + ": unsupported feature file version");
  }
  FeatureMatrix f;
  f.frames = io::read_pod<std::uint64_t>(in);
  if (io::read_pod<std::uint64_t>(in) != kFeatureChannels) {
    throw IoError(path.string() + ": expected 43 channels");
  }
  f.data = io::read_doubles(in, f.frames * kFeatureChannels);
  return f;
}

}  // namespace menan::dsp
