#include "menan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "menan/error.hpp"

namespace menan::corpus {

dsp::Waveform normalize_length(const dsp::Waveform& wave, double target_s) {
  if (wave.samples.empty()) throw LengthError("cannot normalise an empty waveform");
  const auto target = static_cast<std::size_t>(std::llround(target_s * wave.sample_rate));
  const std::size_t n = wave.samples.size();
  dsp::Waveform out{{}, wave.sample_rate};
  if (n >= target) {
    const std::size_t start = (n - target) / 2;
    out.samples.assign(wave.samples.begin() + start,
                       wave.samples.begin() + start + target);
    return out;
  }
  out.samples.reserve(target);
  while (out.samples.size() < target) {
    const std::size_t take = std::min(n, target - out.samples.size());
    out.samples.insert(out.samples.end(), wave.samples.begin(),
                       wave.samples.begin() + take);
  }
  return out;
}

dsp::Waveform speed_perturb(const dsp::Waveform& wave, double ratio) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) {
    throw ParameterError("speed ratio must be positive");
  }
  if (ratio == 1.0) return wave;
  const auto length = static_cast<std::size_t>(
      std::llround(static_cast<double>(wave.samples.size()) / ratio));
  return dsp::Waveform{dsp::resample(wave.samples, ratio, length), wave.sample_rate};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ManifestError(path.string() + " is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (split_csv_line(line) != header) {
    std::string expected;
    for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
    throw ManifestError(path.string() + ": header must be `" + expected + "`");
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ManifestError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(header.size()) + " fields");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::size_t Manifest::emotion_index(const std::string& emotion) const {
  auto it = std::find(emotions.begin(), emotions.end(), emotion);
  if (it == emotions.end()) throw LabelError("unknown emotion '" + emotion + "'");
  return static_cast<std::size_t>(it - emotions.begin());
}

std::size_t Manifest::speaker_index(const std::string& speaker) const {
  auto it = std::lower_bound(speakers.begin(), speakers.end(), speaker);
  if (it == speakers.end() || *it != speaker) {
    throw LabelError("unknown speaker '" + speaker + "'");
  }
  return static_cast<std::size_t>(it - speakers.begin());
}

void finalize(Manifest& manifest) {
  std::set<std::string> ids, speakers, emotions;
  for (const auto& r : manifest.rows) {
    if (r.id.empty() || r.speaker_id.empty() || r.emotion.empty()) {
      throw ManifestError("manifest row with empty id, speaker or emotion");
    }
    if (!ids.insert(r.id).second) throw ManifestError("duplicate utterance id '" + r.id + "'");
    speakers.insert(r.speaker_id);
    emotions.insert(r.emotion);
  }
  manifest.speakers.assign(speakers.begin(), speakers.end());
  bool canonical = std::all_of(emotions.begin(), emotions.end(), [](const auto& e) {
    return std::find(kEmotions.begin(), kEmotions.end(), e) != kEmotions.end();
  });
  manifest.emotions.clear();
  if (canonical) {
    for (const auto& e : kEmotions)
      if (emotions.count(e)) manifest.emotions.push_back(e);
  } else {
    manifest.emotions.assign(emotions.begin(), emotions.end());
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  for (auto& f : read_csv(path, {"id", "path", "speaker_id", "emotion", "duration_s"})) {
    UtteranceRecord r{f[0], f[1], f[2], f[3], 0.0};
    try {
      r.duration_s = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ManifestError(path.string() + ": bad duration '" + f[4] + "' for " + r.id);
    }
    m.rows.push_back(std::move(r));
  }
  finalize(m);
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,path,speaker_id,emotion,duration_s\n";
  for (const auto& r : manifest.rows) {
    std::ostringstream dur;
    dur << std::setprecision(6) << std::fixed << r.duration_s;
    out << csv_field(r.id) << ',' << csv_field(r.path) << ',' << csv_field(r.speaker_id)
        << ',' << csv_field(r.emotion) << ',' << dur.str() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::string session_of(const std::string& speaker_id) {
  auto pos = speaker_id.rfind('_');
  if (pos != std::string::npos && pos > 0) return speaker_id.substr(0, pos);
  if (speaker_id.size() < 2) {
    throw ManifestError("cannot derive a session from speaker id '" + speaker_id + "'");
  }
  return speaker_id.substr(0, speaker_id.size() - 1);
}

std::vector<SpeakerSession> session_table(const Manifest& manifest) {
  std::vector<SpeakerSession> out;
  for (const auto& s : manifest.speakers) out.push_back({s, session_of(s)});
  return out;
}

std::vector<SpeakerSession> read_sessions(const std::filesystem::path& path) {
  std::vector<SpeakerSession> out;
  for (auto& f : read_csv(path, {"speaker_id", "session"})) out.push_back({f[0], f[1]});
  return out;
}

std::vector<FoldSpec> make_folds(const std::vector<SpeakerSession>& sessions) {
  std::map<std::string, std::string> session_by_speaker;
  std::map<std::string, std::vector<std::string>> members;
  for (const auto& [speaker, session] : sessions) {
    auto [it, inserted] = session_by_speaker.emplace(speaker, session);
    if (!inserted) {
      if (it->second != session) {
        throw ManifestError("speaker '" + speaker + "' appears in sessions '" +
                            it->second + "' and '" + session + "'");
      }
      continue;
    }
    members[session].push_back(speaker);
  }
  std::vector<std::string> all;
  for (const auto& [speaker, _] : session_by_speaker) all.push_back(speaker);

  std::vector<FoldSpec> folds;
  for (auto& [session, speakers] : members) {
    if (speakers.size() != 2) {
      throw ManifestError("session '" + session + "' has " +
                          std::to_string(speakers.size()) + " speakers, expected 2");
    }
    std::sort(speakers.begin(), speakers.end());
    for (int order = 0; order < 2; ++order) {
      FoldSpec f;
      f.index = folds.size();
      f.val_speaker = speakers[order];
      f.test_speaker = speakers[1 - order];
      for (const auto& s : all)
        if (s != f.val_speaker && s != f.test_speaker) f.train_speakers.push_back(s);
      folds.push_back(std::move(f));
    }
  }
  return folds;
}

void write_folds(const std::filesystem::path& path, const std::vector<FoldSpec>& folds) {
  nlohmann::ordered_json doc;
  doc["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : folds) {
    doc["folds"].push_back({{"fold", f.index},
                            {"train_speakers", f.train_speakers},
                            {"val_speaker", f.val_speaker},
                            {"test_speaker", f.test_speaker}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<FoldSpec> read_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<FoldSpec> folds;
  try {
    auto doc = nlohmann::json::parse(in);
    for (const auto& f : doc.at("folds")) {
      folds.push_back({f.at("fold").get<std::size_t>(),
                       f.at("train_speakers").get<std::vector<std::string>>(),
                       f.at("val_speaker").get<std::string>(),
                       f.at("test_speaker").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return folds;
}

}  // namespace menan::corpus
