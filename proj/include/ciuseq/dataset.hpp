#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ciuseq/chat.hpp"
#include "ciuseq/ciu.hpp"
#include "ciuseq/error.hpp"

namespace ciuseq {

// One labeled-dataset record: a sentence attributed to a speaker.
struct CorpusEntry {
  std::string speaker_id;
  LabeledSentence sentence;

  friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

struct SpeakerInfo {
  double age = 0.0;
  int gender = 0;  // binary covariate code
  double education = 0.0;
  std::string group;  // "control" | "impaired"

  friend bool operator==(const SpeakerInfo&, const SpeakerInfo&) = default;
};

using Manifest = std::map<std::string, SpeakerInfo>;

struct SpeakerSequence {
  std::string speaker_id;
  CiuSequence sequence;
};

// --- labeled dataset (line-delimited JSON records) ---

inline void save_dataset(const std::vector<CorpusEntry>& entries, std::ostream& out) {
  for (const auto& e : entries) {
    nlohmann::json rec;
    rec["speaker_id"] = e.speaker_id;
    rec["sentence_tokens"] = e.sentence.tokens;
    auto labels = nlohmann::json::array();
    for (CiuId id : e.sentence.labels) labels.push_back(std::string(canonical_name(id)));
    rec["ciu_labels"] = std::move(labels);
    out << rec.dump() << '\n';
  }
}

inline std::vector<CorpusEntry> load_dataset(std::istream& in) {
  std::vector<CorpusEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    CorpusEntry entry;
    try {
      entry.speaker_id = rec.at("speaker_id").get<std::string>();
      entry.sentence.tokens = rec.at("sentence_tokens").get<std::vector<std::string>>();
      for (const auto& name : rec.at("ciu_labels")) {
        const CiuId id = parse_ciu_name(name.get<std::string>());
        for (CiuId prev : entry.sentence.labels)
          if (prev == id)
            throw ParseError("dataset line " + std::to_string(lineno) + ": duplicate label \"" +
                             std::string(canonical_name(id)) + "\" within one sentence");
        entry.sentence.labels.push_back(id);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    if (entry.speaker_id.empty())
      throw ParseError("dataset line " + std::to_string(lineno) + ": empty speaker_id");
    entries.push_back(std::move(entry));
  }
  return entries;
}

// --- sidecar manifest (speaker covariates, line-delimited JSON) ---

inline void save_manifest(const Manifest& manifest, std::ostream& out) {
  for (const auto& [speaker, info] : manifest) {
    nlohmann::json rec;
    rec["speaker_id"] = speaker;
    rec["age"] = info.age;
    rec["gender"] = info.gender;
    rec["education"] = info.education;
    rec["group"] = info.group;
    out << rec.dump() << '\n';
  }
}

inline Manifest load_manifest(std::istream& in) {
  Manifest manifest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      SpeakerInfo info;
      const auto speaker = rec.at("speaker_id").get<std::string>();
      info.age = rec.at("age").get<double>();
      info.gender = rec.at("gender").get<int>();
      info.education = rec.at("education").get<double>();
      info.group = rec.at("group").get<std::string>();
      if (info.group != "control" && info.group != "impaired")
        throw ParseError("manifest line " + std::to_string(lineno) + ": group must be control|impaired");
      manifest[speaker] = info;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return manifest;
}

// --- tagged sequences (tagger output, line-delimited JSON) ---

inline void save_sequences(const std::vector<SpeakerSequence>& seqs, std::ostream& out) {
  for (const auto& s : seqs) {
    nlohmann::json rec;
    rec["speaker_id"] = s.speaker_id;
    auto items = nlohmann::json::array();
    for (const auto& item : s.sequence) {
      nlohmann::json j;
      j["ciu"] = std::string(canonical_name(item.id));
      j["sentence"] = item.sentence;
      items.push_back(std::move(j));
    }
    rec["items"] = std::move(items);
    out << rec.dump() << '\n';
  }
}

inline std::vector<SpeakerSequence> load_sequences(std::istream& in) {
  std::vector<SpeakerSequence> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      SpeakerSequence s;
      s.speaker_id = rec.at("speaker_id").get<std::string>();
      for (const auto& item : rec.at("items")) {
        CiuItem ci;
        ci.id = parse_ciu_name(item.at("ciu").get<std::string>());
        ci.sentence = item.value("sentence", -1);
        s.sequence.push_back(ci);
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("sequence line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Group all sentences of a dataset by speaker, preserving file order within
// each speaker. Speaker order follows first appearance.
inline std::vector<std::pair<std::string, std::vector<LabeledSentence>>> group_by_speaker(
    const std::vector<CorpusEntry>& entries) {
  std::vector<std::pair<std::string, std::vector<LabeledSentence>>> grouped;
  std::map<std::string, std::size_t> index;
  for (const auto& e : entries) {
    auto it = index.find(e.speaker_id);
    if (it == index.end()) {
      index[e.speaker_id] = grouped.size();
      grouped.push_back({e.speaker_id, {}});
      it = index.find(e.speaker_id);
    }
    grouped[it->second].second.push_back(e.sentence);
  }
  return grouped;
}

}  // namespace ciuseq
