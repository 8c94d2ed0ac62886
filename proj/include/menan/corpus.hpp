#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "menan/audio.hpp"

namespace menan::corpus {

inline constexpr double kTargetSeconds = 14.0;
inline const std::vector<double> kSpeedRatios = {0.8, 0.9, 1.1, 1.2};
/// Canonical label order; manifests using only these names keep this order.
inline const std::vector<std::string> kEmotions = {"angry", "happy", "neutral", "sad"};

/// Centered crop when longer than the target, cycle-repeat (whole copies,
/// the last one truncated, no crossfade) when shorter.
dsp::Waveform normalize_length(const dsp::Waveform& wave,
                               double target_s = kTargetSeconds);

/// Resamples so the output lasts duration/ratio; pitch scales with speed.
/// Ratio 1 returns the input unchanged.
dsp::Waveform speed_perturb(const dsp::Waveform& wave, double ratio);

struct UtteranceRecord {
  std::string id;
  std::string path;
  std::string speaker_id;
  std::string emotion;
  double duration_s = 0.0;
};

struct Manifest {
  std::vector<UtteranceRecord> rows;
  std::vector<std::string> speakers;  // sorted
  std::vector<std::string> emotions;  // canonical order when possible

  std::size_t emotion_index(const std::string& emotion) const;
  std::size_t speaker_index(const std::string& speaker) const;
};

/// Fills the speaker and emotion sets from the rows and checks ids are
/// unique.
void finalize(Manifest& manifest);

/// CSV, UTF-8, header `id,path,speaker_id,emotion,duration_s`.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Session of a speaker id: the text before the last '_' if present
/// ("S03_B" -> "S03"), otherwise the id minus its final character
/// ("Ses01F" -> "Ses01").
std::string session_of(const std::string& speaker_id);

struct SpeakerSession {
  std::string speaker_id;
  std::string session;
};

/// Session assignment for every manifest speaker, from `session_of` or, when
/// given, an explicit `speaker_id,session` CSV.
std::vector<SpeakerSession> session_table(const Manifest& manifest);
std::vector<SpeakerSession> read_sessions(const std::filesystem::path& path);

struct FoldSpec {
  std::size_t index = 0;
  std::vector<std::string> train_speakers;
  std::string val_speaker;
  std::string test_speaker;
};

/// Leave-one-session-out with both speaker orders: for every session of two
/// speakers (A < B) the folds (val=A, test=B) and (val=B, test=A), all
/// other speakers training. Throws ManifestError when a speaker appears in
/// two sessions or a session does not hold exactly two speakers.
std::vector<FoldSpec> make_folds(const std::vector<SpeakerSession>& sessions);

/// JSON: {"folds":[{"fold":0,"train_speakers":[...],"val_speaker":"..",
///         "test_speaker":".."}, ...]}
void write_folds(const std::filesystem::path& path, const std::vector<FoldSpec>& folds);
std::vector<FoldSpec> read_folds(const std::filesystem::path& path);

}  // namespace menan::corpus
