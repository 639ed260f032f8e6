#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ciuseq/ciu.hpp"
#include "ciuseq/error.hpp"
#include "ciuseq/text.hpp"

namespace ciuseq {

// One `*TIER:` line (plus its continuations and `%` dependent tiers).
struct Utterance {
  std::string tier;
  std::string raw;
  std::vector<std::pair<std::string, std::string>> dependents;  // kept, ignored downstream
  std::vector<std::vector<std::string>> sentences;              // cleaned + segmented
};

struct Transcript {
  std::string speaker_id;
  std::map<std::string, std::string> metadata;  // age / gender / education / group when present
  std::vector<Utterance> utterances;

  // Cleaned sentences of one tier, in file order.
  std::vector<std::vector<std::string>> tier_sentences(std::string_view tier) const {
    std::vector<std::vector<std::string>> out;
    for (const auto& utt : utterances) {
      if (utt.tier != tier) continue;
      for (const auto& s : utt.sentences) out.push_back(s);
    }
    return out;
  }
};

// A sentence with its ordered CIU annotation. Labels never repeat within a
// sentence; their order is the annotation (mention) order.
struct LabeledSentence {
  std::vector<std::string> tokens;
  std::vector<CiuId> labels;

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

namespace detail {

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'' || c == '-';
}

// Structural pass over CHAT control codes. The utterance becomes a list of
// units (words, or whole <...> groups); a [...] group whose content starts
// with '/' marks the preceding unit as repeated/retraced material and drops
// it, every other [...] group is simply removed. <...> groups otherwise keep
// their inner words. (..) all-dot pauses separate words; other parentheses
// unwrap in place ("(be)cause" -> "because").
inline std::string strip_chat_groups(std::string_view raw) {
  std::vector<std::string> units;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty()) {
      units.push_back(cur);
      cur.clear();
    }
  };

  std::size_t i = 0;
  while (i < raw.size()) {
    const char c = raw[i];
    if (c == '[') {
      std::size_t j = i + 1;
      while (j < raw.size() && raw[j] != ']') ++j;
      const std::string_view inner = raw.substr(i + 1, j - i - 1);
      flush();
      if (!inner.empty() && inner[0] == '/' && !units.empty()) units.pop_back();
      i = (j < raw.size()) ? j + 1 : j;
      continue;
    }
    if (c == '<') {
      std::size_t j = i + 1;
      while (j < raw.size() && raw[j] != '>') ++j;
      flush();
      const std::string unit{trim(raw.substr(i + 1, j - i - 1))};
      if (!unit.empty()) units.push_back(unit);  // one unit, so [//] drops it whole
      i = (j < raw.size()) ? j + 1 : j;
      continue;
    }
    if (c == '>') {
      flush();
      ++i;
      continue;
    }
    if (c == '(') {
      std::size_t j = i + 1;
      while (j < raw.size() && raw[j] != ')') ++j;
      const std::string_view inner = raw.substr(i + 1, j - i - 1);
      bool pause = !inner.empty();
      for (const char ic : inner)
        if (ic != '.') pause = false;
      if (pause) flush();
      else cur.append(inner);  // omitted-part completion stays attached
      i = (j < raw.size()) ? j + 1 : j;
      continue;
    }
    if (is_space(c)) {
      flush();
      ++i;
      continue;
    }
    cur.push_back(c);
    ++i;
  }
  flush();
  return join(units, " ");
}

}  // namespace detail

// Clean one utterance and split it into sentences of lowercase tokens.
// Strips CHAT control codes ([..] groups, &-fillers, (..) pauses, +codes),
// keeps words inside <...> retrace groups, splits sentences on . ? ! and
// drops residual punctuation. Non-ASCII bytes are dropped.
inline std::vector<std::vector<std::string>> clean_and_segment(std::string_view raw) {
  const std::string stripped = detail::strip_chat_groups(raw);

  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> sentence;
  std::string word;

  const auto flush_word = [&] {
    if (!word.empty()) {
      sentence.push_back(word);
      word.clear();
    }
  };
  const auto flush_sentence = [&] {
    flush_word();
    if (!sentence.empty()) {
      sentences.push_back(std::move(sentence));
      sentence.clear();
    }
  };

  for (const std::string& token : split_whitespace(stripped)) {
    if (token[0] == '&' || token[0] == '+') continue;  // fillers and utterance codes
    for (char c : token) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      if (c == '.' || c == '?' || c == '!') {
        flush_sentence();
      } else if (c == '@') {
        break;  // word@code annotations: keep the word, drop the code
      } else if (detail::is_word_char(c)) {
        word.push_back(c);
      } else {
        flush_word();  // other punctuation separates words
      }
    }
    flush_word();
  }
  flush_sentence();

  // A bare apostrophe or hyphen survives the char filter; drop such husks.
  for (auto& s : sentences) {
    std::erase_if(s, [](const std::string& w) {
      for (char c : w)
        if (c != '\'' && c != '-') return false;
      return true;
    });
  }
  std::erase_if(sentences, [](const auto& s) { return s.empty(); });
  return sentences;
}

struct ChatOptions {
  std::string participant_tier = "PAR";
  std::string fallback_speaker_id;  // used when no @ID header names one
};

namespace detail {

// @ID field layout: language|speaker or corpus|tier|age|sex|group|SES|role|education|...
// Only the @ID row matching the participant tier feeds speaker id + metadata.
inline void apply_id_header(Transcript& t, std::string_view value, const std::string& tier) {
  const auto fields = split(value, '|');
  const auto field = [&](std::size_t i) -> std::string {
    return i < fields.size() ? std::string(trim(fields[i])) : std::string();
  };
  const std::string row_tier = field(2);
  if (!row_tier.empty() && row_tier != tier) return;
  if (t.speaker_id.empty() && !field(1).empty()) t.speaker_id = field(1);
  const auto set_if = [&](const char* key, const std::string& v) {
    if (!v.empty() && !t.metadata.count(key)) t.metadata[key] = v;
  };
  set_if("age", field(3));
  set_if("gender", field(4));
  set_if("group", field(5));
  set_if("education", field(8));
}

}  // namespace detail

// Parse a CHAT-format transcript (practical subset): `@` headers become
// metadata, `*TIER:` lines become utterances, `%` tiers attach to the
// preceding utterance, leading-tab lines continue the previous line.
inline Transcript parse_chat(std::string_view text, const ChatOptions& opts = {}) {
  Transcript t;
  std::string* continuation_target = nullptr;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, (eol == std::string_view::npos ? text.size() : eol) - pos);
    pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    if (line[0] == '\t' || line[0] == ' ') {
      if (continuation_target == nullptr)
        throw MalformedLineError("line " + std::to_string(lineno) + ": continuation without a prior tier line");
      *continuation_target += ' ';
      *continuation_target += trim(line);
      continue;
    }

    if (line[0] == '@') {
      const std::size_t colon = line.find(':');
      if (colon == std::string_view::npos) continue;  // @Begin, @End and friends
      const std::string key = to_lower(std::string(trim(line.substr(1, colon - 1))));
      const std::string value{trim(line.substr(colon + 1))};
      if (key == "id") {
        detail::apply_id_header(t, value, opts.participant_tier);
      } else if (key == "age" || key == "sex" || key == "gender" || key == "education" || key == "group") {
        t.metadata[key == "sex" ? "gender" : key] = value;
      } else {
        t.metadata[key] = value;
      }
      continuation_target = nullptr;
      continue;
    }

    if (line[0] == '*') {
      const std::size_t colon = line.find(':');
      if (colon == std::string_view::npos)
        throw MalformedLineError("line " + std::to_string(lineno) + ": tier line without ':': \"" +
                                 std::string(line) + "\"");
      Utterance utt;
      utt.tier = std::string(trim(line.substr(1, colon - 1)));
      utt.raw = std::string(trim(line.substr(colon + 1)));
      t.utterances.push_back(std::move(utt));
      continuation_target = &t.utterances.back().raw;
      continue;
    }

    if (line[0] == '%') {
      const std::size_t colon = line.find(':');
      if (colon == std::string_view::npos || t.utterances.empty())
        throw MalformedLineError("line " + std::to_string(lineno) + ": dangling dependent tier: \"" +
                                 std::string(line) + "\"");
      auto& deps = t.utterances.back().dependents;
      deps.emplace_back(std::string(trim(line.substr(1, colon - 1))), std::string(trim(line.substr(colon + 1))));
      continuation_target = &deps.back().second;
      continue;
    }

    throw MalformedLineError("line " + std::to_string(lineno) + ": unrecognized line: \"" +
                             std::string(line) + "\"");
  }

  if (t.utterances.empty()) throw EmptyTranscriptError("transcript has no *-tier utterances");

  if (t.speaker_id.empty()) t.speaker_id = opts.fallback_speaker_id;
  if (t.speaker_id.empty()) t.speaker_id = "unknown";

  for (auto& utt : t.utterances) utt.sentences = clean_and_segment(utt.raw);
  return t;
}

// Metadata helpers for manifest construction. CHAT ages look like
// "66;" or "66;06." (years;months.days).
inline std::optional<double> metadata_age_years(const Transcript& t) {
  const auto it = t.metadata.find("age");
  if (it == t.metadata.end()) return std::nullopt;
  const auto parts = split(it->second, ';');
  try {
    double years = parse_double(trim(parts[0]));
    if (parts.size() > 1) {
      auto month_part = std::string(trim(parts[1]));
      if (!month_part.empty() && month_part.back() == '.') month_part.pop_back();
      const auto month_fields = split(month_part, '.');
      if (!month_fields.empty() && !trim(month_fields[0]).empty())
        years += parse_double(trim(month_fields[0])) / 12.0;
    }
    return years;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<int> metadata_gender_code(const Transcript& t) {
  const auto it = t.metadata.find("gender");
  if (it == t.metadata.end()) return std::nullopt;
  const std::string g = to_lower(trim(it->second).substr(0, 1));
  if (g == "f") return 0;
  if (g == "m") return 1;
  return std::nullopt;
}

inline std::optional<double> metadata_education_years(const Transcript& t) {
  const auto it = t.metadata.find("education");
  if (it == t.metadata.end()) return std::nullopt;
  try {
    return parse_double(trim(split(it->second, ';')[0]));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Group label: "control" (case-insensitive) maps to control, anything else
// present maps to impaired.
inline std::optional<std::string> metadata_group(const Transcript& t) {
  const auto it = t.metadata.find("group");
  if (it == t.metadata.end() || trim(it->second).empty()) return std::nullopt;
  return to_lower(trim(it->second)) == "control" ? "control" : "impaired";
}

}  // namespace ciuseq
