#pragma once

#include <istream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ciuseq/chat.hpp"
#include "ciuseq/ciu.hpp"
#include "ciuseq/error.hpp"
#include "ciuseq/text.hpp"

namespace ciuseq {

// Phrase -> CIU lookup for the training-free baseline tagger. Phrases are
// lowercase token sequences; duplicate phrases across file lines merge their
// target sets, keeping first-declaration order.
struct CiuDictionary {
  struct Entry {
    std::vector<CiuId> targets;  // declaration order, no duplicates
  };

  std::unordered_map<std::string, Entry> entries;  // key: tokens joined with ' '
  std::size_t max_phrase_len = 0;

  bool empty() const { return entries.empty(); }

  void add(const std::vector<std::string>& phrase_tokens, CiuId target) {
    if (phrase_tokens.empty()) throw ParseError("dictionary phrase must be non-empty");
    const std::string key = join(phrase_tokens, " ");
    auto& entry = entries[key];
    for (CiuId existing : entry.targets)
      if (existing == target) return;
    entry.targets.push_back(target);
    if (phrase_tokens.size() > max_phrase_len) max_phrase_len = phrase_tokens.size();
  }
};

// Dictionary file format: `<phrase> -> <ciu name>[, <ciu name>...]` per line,
// `#` starts a comment.
inline CiuDictionary load_dictionary(std::istream& in) {
  CiuDictionary dict;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const std::size_t arrow = stripped.find("->");
    if (arrow == std::string_view::npos)
      throw ParseError("dictionary line " + std::to_string(lineno) + ": expected `<phrase> -> <ciu name>`");
    const auto phrase = split_whitespace(to_lower(stripped.substr(0, arrow)));
    if (phrase.empty())
      throw ParseError("dictionary line " + std::to_string(lineno) + ": empty phrase");
    const auto target_field = stripped.substr(arrow + 2);
    bool any_target = false;
    for (const auto& name : split(target_field, ',')) {
      if (trim(name).empty()) continue;
      CiuId id;
      try {
        id = parse_ciu_name(name);
      } catch (const UnknownCiuError& e) {
        throw UnknownCiuError("dictionary line " + std::to_string(lineno) + ": " + e.what());
      }
      dict.add(phrase, id);
      any_target = true;
    }
    if (!any_target)
      throw ParseError("dictionary line " + std::to_string(lineno) + ": no CIU target");
  }
  return dict;
}

inline CiuDictionary load_dictionary_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return load_dictionary(in);
}

// Left-to-right greedy longest-match scan over cleaned tokens. A match emits
// the phrase's CIUs in declaration order and the scan resumes past the
// phrase; repeats across matches are preserved.
inline CiuSequence tag_sentence_dict(std::span<const std::string> tokens, const CiuDictionary& dict,
                                     int sentence_index = -1) {
  CiuSequence out;
  std::size_t pos = 0;
  while (pos < tokens.size()) {
    const std::size_t longest = std::min(dict.max_phrase_len, tokens.size() - pos);
    bool matched = false;
    for (std::size_t len = longest; len >= 1 && !matched; --len) {
      std::string key = tokens[pos];
      for (std::size_t i = 1; i < len; ++i) {
        key += ' ';
        key += tokens[pos + i];
      }
      const auto it = dict.entries.find(key);
      if (it != dict.entries.end()) {
        for (CiuId id : it->second.targets) out.push_back({id, sentence_index});
        pos += len;
        matched = true;
      }
    }
    if (!matched) ++pos;
  }
  return out;
}

// Concatenation of per-sentence tags over the participant tier, with global
// sentence indices attached.
inline CiuSequence tag_transcript_dict(const Transcript& t, const CiuDictionary& dict,
                                       std::string_view participant_tier = "PAR") {
  CiuSequence out;
  int sentence_index = 0;
  for (const auto& sentence : t.tier_sentences(participant_tier)) {
    const CiuSequence tagged = tag_sentence_dict(sentence, dict, sentence_index);
    out.insert(out.end(), tagged.begin(), tagged.end());
    ++sentence_index;
  }
  return out;
}

}  // namespace ciuseq
