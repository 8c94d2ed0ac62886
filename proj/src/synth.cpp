#include "menan/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>

#include "menan/error.hpp"

namespace menan::synth {

namespace {

constexpr double kLowestPitch = 90.0;
constexpr double kHighestPitch = 300.0;
constexpr double kRateJitter = 0.4;
constexpr double kDepthJitter = 0.05;
constexpr int kPartials = 6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

double speaker_pitch_center(std::size_t speaker, std::size_t n_speakers) {
  if (n_speakers < 2) return kLowestPitch;
  double frac = static_cast<double>(speaker) / static_cast<double>(n_speakers - 1);
  return kLowestPitch * std::pow(kHighestPitch / kLowestPitch, frac);
}

double emotion_mod_rate(std::size_t emotion) { return 2.0 + 1.5 * static_cast<double>(emotion); }

double emotion_mod_depth(std::size_t emotion, std::size_t n_emotions) {
  return 0.2 + 0.6 * static_cast<double>(emotion) / static_cast<double>(n_emotions - 1);
}

std::string speaker_name(std::size_t speaker) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "S%02zu_%c", speaker / 2 + 1,
                static_cast<char>('A' + speaker % 2));
  return buf;
}

std::string emotion_name(std::size_t emotion, std::size_t n_emotions) {
  if (n_emotions <= corpus::kEmotions.size()) return corpus::kEmotions[emotion];
  char buf[32];
  std::snprintf(buf, sizeof(buf), "emo%02zu", emotion);
  return buf;
}

SynthCorpus generate_synthetic(const SynthConfig& config) {
  if (config.n_speakers < 4) throw ParameterError("synthetic corpus needs >= 4 speakers");
  if (config.n_emotions < 2) throw ParameterError("synthetic corpus needs >= 2 emotions");
  if (config.n_per_cell == 0) throw ParameterError("n_per_cell must be positive");
  if (!(config.min_seconds > 0.0) || config.max_seconds < config.min_seconds) {
    throw ParameterError("invalid synthetic duration range");
  }
  if (!(config.pitch_jitter >= 0.0)) throw ParameterError("pitch_jitter must be non-negative");
  SynthCorpus out;
  std::size_t index = 0;
  for (std::size_t s = 0; s < config.n_speakers; ++s) {
    for (std::size_t e = 0; e < config.n_emotions; ++e) {
      for (std::size_t k = 0; k < config.n_per_cell; ++k, ++index) {
        std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(index)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

        SynthFactors f;
        char id[64];
        std::snprintf(id, sizeof(id), "%s_%s_%03zu", speaker_name(s).c_str(),
                      emotion_name(e, config.n_emotions).c_str(), k);
        f.id = id;
        f.speaker = s;
        f.emotion = e;
        f.f0_hz = speaker_pitch_center(s, config.n_speakers) *
                  std::exp(uniform(-config.pitch_jitter, config.pitch_jitter));
        f.mod_rate_hz = emotion_mod_rate(e) + uniform(-kRateJitter, kRateJitter);
        f.mod_depth = emotion_mod_depth(e, config.n_emotions) +
                      uniform(-kDepthJitter, kDepthJitter);
        f.gain = uniform(0.2, 0.35);
        const double seconds = uniform(config.min_seconds, config.max_seconds);
        const auto n = static_cast<std::size_t>(std::llround(seconds * dsp::kSampleRate));

        std::array<double, kPartials> phase{};
        for (auto& p : phase) p = uniform(0.0, 2.0 * std::numbers::pi);
        const double env_phase = uniform(0.0, 2.0 * std::numbers::pi);
        const double drift_phase = uniform(0.0, 2.0 * std::numbers::pi);
        double norm = 0.0;
        for (int h = 1; h <= kPartials; ++h) norm += 1.0 / (h * h);
        norm = std::sqrt(2.0 / norm);  // unit-power harmonic complex

        std::normal_distribution<double> noise(0.0, config.noise_sigma);
        dsp::Waveform w;
        w.samples.resize(n);
        double cycle = 0.0;  // integrated fundamental phase, in cycles
        for (std::size_t i = 0; i < n; ++i) {
          const double t = static_cast<double>(i) / dsp::kSampleRate;
          const double f0 = f.f0_hz *
                            (1.0 + 0.01 * std::sin(2.0 * std::numbers::pi * 0.3 * t + drift_phase));
          cycle += f0 / dsp::kSampleRate;
          double tone = 0.0;
          for (int h = 1; h <= kPartials; ++h) {
            tone += std::sin(2.0 * std::numbers::pi * h * cycle + phase[h - 1]) / h;
          }
          const double env =
              1.0 + f.mod_depth * std::sin(2.0 * std::numbers::pi * f.mod_rate_hz * t + env_phase);
          w.samples[i] = f.gain * env * norm * tone + noise(rng);
        }
        out.manifest.rows.push_back({f.id, "wav/" + f.id + ".wav", speaker_name(s),
                                     emotion_name(e, config.n_emotions), w.duration_s()});
        out.waves.push_back(std::move(w));
        out.factors.push_back(std::move(f));
      }
    }
  }
  corpus::finalize(out.manifest);
  return out;
}

std::pair<std::size_t, std::size_t> oracle_labels(const SynthFactors& factors,
                                                  const SynthConfig& config) {
  std::size_t speaker = 0, emotion = 0;
  double best = INFINITY;
  for (std::size_t s = 0; s < config.n_speakers; ++s) {
    double d = std::abs(std::log(factors.f0_hz / speaker_pitch_center(s, config.n_speakers)));
    if (d < best) {
      best = d;
      speaker = s;
    }
  }
  best = INFINITY;
  for (std::size_t e = 0; e < config.n_emotions; ++e) {
    double d = std::abs(factors.mod_rate_hz - emotion_mod_rate(e));
    if (d < best) {
      best = d;
      emotion = e;
    }
  }
  return {speaker, emotion};
}

void write_synthetic(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir / "wav");
  for (std::size_t i = 0; i < corpus.waves.size(); ++i) {
    dsp::write_wav(dir / corpus.manifest.rows[i].path, corpus.waves[i]);
  }
  corpus::write_manifest(dir / "manifest.csv", corpus.manifest);
  std::ofstream out(dir / "factors.csv", std::ios::trunc);
  if (!out) throw IoError("cannot write factors.csv");
  out << "id,speaker,emotion,f0_hz,mod_rate_hz,mod_depth,gain\n" << std::setprecision(17);
  for (const auto& f : corpus.factors) {
    out << f.id << ',' << f.speaker << ',' << f.emotion << ',' << f.f0_hz << ','
        << f.mod_rate_hz << ',' << f.mod_depth << ',' << f.gain << '\n';
  }
}

}  // namespace menan::synth
