#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ciuseq/ciu.hpp"
#include "ciuseq/dataset.hpp"
#include "ciuseq/dictionary.hpp"
#include "ciuseq/rng.hpp"
#include "ciuseq/text.hpp"

namespace ciuseq {

// Controls the synthetic picture-description generator. Every CIU carries a
// set of surface templates; sentences are realized as template phrases
// separated by filler tokens. Impaired speakers repeat more and draw from a
// smaller CIU pool, so group effects exist for the statistics to find.
struct TemplateSpec {
  int min_cius_per_sentence = 1;
  int max_cius_per_sentence = 4;
  double filler_rate = 0.4;        // chance of extra fillers at each junction
  double impaired_fraction = 0.5;  // per-speaker group draw
  double repetition_prob_control = 0.05;
  double repetition_prob_impaired = 0.35;
  // Chance that a sentence mentions its CIUs in the canonical scan order
  // (ascending CIU code) rather than shuffled; impaired narration wanders.
  double canonical_order_prob_control = 0.85;
  double canonical_order_prob_impaired = 0.6;
  int unique_pool_control = 23;  // distinct CIUs a speaker can mention
  int unique_pool_impaired = 10;
  std::uint64_t seed = 7;
  std::vector<std::string> fillers;
  std::array<std::vector<std::vector<std::string>>, kCiuCount> templates;

  static TemplateSpec defaults();
  void validate() const;
};

inline TemplateSpec TemplateSpec::defaults() {
  TemplateSpec spec;
  spec.fillers = {"um", "uh", "erm", "well", "hmm", "anyway", "you", "know", "sort", "of"};
  const auto set = [&](CiuId id, std::vector<std::vector<std::string>> phrases) {
    spec.templates[static_cast<std::size_t>(ciu_code(id))] = std::move(phrases);
  };
  set(CiuId::Boy, {{"the", "boy"}, {"the", "little", "boy"}, {"her", "son"}});
  set(CiuId::Girl, {{"the", "girl"}, {"the", "little", "girl"}, {"his", "sister"}});
  set(CiuId::Woman, {{"the", "woman"}, {"the", "mother"}, {"a", "lady"}});
  set(CiuId::Kitchen, {{"the", "kitchen"}, {"in", "the", "kitchen"}});
  set(CiuId::Outside, {{"outside"}, {"out", "in", "the", "yard"}});
  set(CiuId::Cookie, {{"a", "cookie"}, {"the", "cookie"}, {"some", "cookies"}});
  set(CiuId::Jar, {{"the", "jar"}, {"the", "cookie", "jar"}});
  set(CiuId::Stool, {{"the", "stool"}, {"a", "wobbly", "stool"}});
  set(CiuId::Sink, {{"the", "sink"}, {"the", "kitchen", "sink"}});
  set(CiuId::Plate, {{"a", "plate"}, {"the", "plate"}});
  set(CiuId::Dishcloth, {{"the", "dishcloth"}, {"a", "dish", "towel"}});
  set(CiuId::Water, {{"the", "water"}, {"some", "water"}});
  set(CiuId::Window, {{"the", "window"}, {"an", "open", "window"}});
  set(CiuId::Cupboard, {{"the", "cupboard"}, {"a", "high", "cupboard"}});
  set(CiuId::Dishes, {{"the", "dishes"}, {"dirty", "dishes"}});
  set(CiuId::Curtains, {{"the", "curtains"}, {"frilly", "curtains"}});
  set(CiuId::BoyTakingStealing,
      {{"the", "boy", "is", "taking", "a", "cookie"}, {"he", "is", "stealing", "cookies"},
       {"the", "boy", "grabs", "a", "cookie"}});
  set(CiuId::BoyOrStoolFalling,
      {{"the", "stool", "is", "tipping", "over"}, {"the", "boy", "is", "falling"}, {"the", "stool", "topples"}});
  set(CiuId::WomanDryingWashingPlates,
      {{"the", "woman", "is", "drying", "a", "plate"}, {"the", "mother", "is", "washing", "dishes"},
       {"she", "wipes", "a", "plate"}});
  set(CiuId::WaterOverflowing,
      {{"the", "water", "is", "overflowing"}, {"the", "sink", "is", "spilling", "over"},
       {"water", "runs", "over", "the", "sink", "edge"}});
  set(CiuId::ActionPerformedByGirl,
      {{"the", "girl", "is", "reaching", "for", "a", "cookie"}, {"she", "asks", "for", "a", "biscuit"},
       {"the", "girl", "laughs"}});
  set(CiuId::WomanUnconcernedByOverflowing,
      {{"the", "woman", "ignores", "the", "water"}, {"she", "is", "oblivious", "to", "the", "flood"}});
  set(CiuId::WomanIndifferentToTheChildren,
      {{"the", "woman", "ignores", "the", "children"}, {"she", "is", "unbothered", "by", "the", "kids"}});
  return spec;
}

inline void TemplateSpec::validate() const {
  const auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidSpecError(std::string("template spec: ") + name + " outside [0,1]");
  };
  prob(filler_rate, "filler_rate");
  prob(impaired_fraction, "impaired_fraction");
  prob(repetition_prob_control, "repetition_prob_control");
  prob(repetition_prob_impaired, "repetition_prob_impaired");
  prob(canonical_order_prob_control, "canonical_order_prob_control");
  prob(canonical_order_prob_impaired, "canonical_order_prob_impaired");
  if (min_cius_per_sentence < 1 || max_cius_per_sentence > 4 || min_cius_per_sentence > max_cius_per_sentence)
    throw InvalidSpecError("template spec: CIUs per sentence must satisfy 1 <= min <= max <= 4");
  const auto pool_ok = [](int pool) { return pool >= 2 && pool <= kCiuCount; };
  if (!pool_ok(unique_pool_control) || !pool_ok(unique_pool_impaired))
    throw InvalidSpecError("template spec: unique pools must be in [2, 23]");
  if (fillers.empty()) throw InvalidSpecError("template spec: no filler tokens");

  std::set<std::string> filler_set(fillers.begin(), fillers.end());
  std::set<std::vector<std::string>> seen_phrases;
  for (int c = 0; c < kCiuCount; ++c) {
    const auto& phrases = templates[static_cast<std::size_t>(c)];
    if (phrases.size() < 2)
      throw InvalidSpecError("template spec: CIU \"" + std::string(canonical_name(static_cast<CiuId>(c))) +
                             "\" needs at least 2 templates");
    for (const auto& phrase : phrases) {
      if (phrase.empty())
        throw InvalidSpecError("template spec: empty template under \"" +
                               std::string(canonical_name(static_cast<CiuId>(c))) + "\"");
      if (!seen_phrases.insert(phrase).second)
        throw InvalidSpecError("template spec: duplicate template \"" + join(phrase, " ") + "\"");
      for (const auto& tok : phrase) {
        if (tok.empty() || tok != to_lower(tok))
          throw InvalidSpecError("template spec: template token \"" + tok + "\" must be non-empty lowercase");
        if (filler_set.count(tok))
          throw InvalidSpecError("template spec: token \"" + tok +
                                 "\" appears both as filler and inside a template");
      }
    }
  }
  for (const auto& f : fillers)
    if (f.empty() || f != to_lower(f)) throw InvalidSpecError("template spec: filler \"" + f + "\" must be lowercase");
}

// --- structured text (JSON) round trip ---------------------------------------

inline std::string template_spec_to_json(const TemplateSpec& spec) {
  nlohmann::json j;
  j["min_cius_per_sentence"] = spec.min_cius_per_sentence;
  j["max_cius_per_sentence"] = spec.max_cius_per_sentence;
  j["filler_rate"] = spec.filler_rate;
  j["impaired_fraction"] = spec.impaired_fraction;
  j["repetition_prob"] = {{"control", spec.repetition_prob_control}, {"impaired", spec.repetition_prob_impaired}};
  j["canonical_order_prob"] = {{"control", spec.canonical_order_prob_control},
                               {"impaired", spec.canonical_order_prob_impaired}};
  j["unique_pool"] = {{"control", spec.unique_pool_control}, {"impaired", spec.unique_pool_impaired}};
  j["seed"] = spec.seed;
  j["fillers"] = spec.fillers;
  nlohmann::json templates = nlohmann::json::object();
  for (int c = 0; c < kCiuCount; ++c) {
    auto list = nlohmann::json::array();
    for (const auto& phrase : spec.templates[static_cast<std::size_t>(c)]) list.push_back(join(phrase, " "));
    templates[std::string(canonical_name(static_cast<CiuId>(c)))] = std::move(list);
  }
  j["templates"] = std::move(templates);
  return j.dump(2) + "\n";
}

// Missing keys keep their defaults; a "templates" object must be complete.
inline TemplateSpec template_spec_from_json(const std::string& text) {
  TemplateSpec spec = TemplateSpec::defaults();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("template spec: ") + e.what());
  }
  try {
    if (j.contains("min_cius_per_sentence")) spec.min_cius_per_sentence = j["min_cius_per_sentence"].get<int>();
    if (j.contains("max_cius_per_sentence")) spec.max_cius_per_sentence = j["max_cius_per_sentence"].get<int>();
    if (j.contains("filler_rate")) spec.filler_rate = j["filler_rate"].get<double>();
    if (j.contains("impaired_fraction")) spec.impaired_fraction = j["impaired_fraction"].get<double>();
    if (j.contains("repetition_prob")) {
      spec.repetition_prob_control = j["repetition_prob"].at("control").get<double>();
      spec.repetition_prob_impaired = j["repetition_prob"].at("impaired").get<double>();
    }
    if (j.contains("canonical_order_prob")) {
      spec.canonical_order_prob_control = j["canonical_order_prob"].at("control").get<double>();
      spec.canonical_order_prob_impaired = j["canonical_order_prob"].at("impaired").get<double>();
    }
    if (j.contains("unique_pool")) {
      spec.unique_pool_control = j["unique_pool"].at("control").get<int>();
      spec.unique_pool_impaired = j["unique_pool"].at("impaired").get<int>();
    }
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("fillers")) spec.fillers = j["fillers"].get<std::vector<std::string>>();
    if (j.contains("templates")) {
      for (auto& list : spec.templates) list.clear();
      for (const auto& [name, phrases] : j["templates"].items()) {
        const CiuId id = parse_ciu_name(name);
        for (const auto& phrase : phrases)
          spec.templates[static_cast<std::size_t>(ciu_code(id))].push_back(
              split_whitespace(phrase.get<std::string>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidSpecError(std::string("template spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

// --- dictionary construction ---------------------------------------------------

// Complete dictionary: every template phrase maps to its CIU. Because
// realized sentences separate template phrases with filler tokens (which
// never occur inside phrases), greedy longest-match tagging recovers the
// planted labels exactly.
inline CiuDictionary dictionary_from_templates(const TemplateSpec& spec, bool sparse = false) {
  CiuDictionary dict;
  for (int c = 0; c < kCiuCount; ++c) {
    const auto& phrases = spec.templates[static_cast<std::size_t>(c)];
    const std::size_t take = sparse ? 1 : phrases.size();
    for (std::size_t i = 0; i < take && i < phrases.size(); ++i) dict.add(phrases[i], static_cast<CiuId>(c));
  }
  return dict;
}

inline std::string dictionary_file_text(const TemplateSpec& spec, bool sparse = false) {
  std::ostringstream out;
  out << "# phrase -> CIU name; greedy longest-match, first-declared wins ties\n";
  for (int c = 0; c < kCiuCount; ++c) {
    const auto& phrases = spec.templates[static_cast<std::size_t>(c)];
    const std::size_t take = sparse ? 1 : phrases.size();
    for (std::size_t i = 0; i < take && i < phrases.size(); ++i)
      out << join(phrases[i], " ") << " -> " << canonical_name(static_cast<CiuId>(c)) << "\n";
  }
  return out.str();
}

// --- corpus generation -----------------------------------------------------------

struct SynthCorpus {
  std::vector<CorpusEntry> entries;
  Manifest manifest;
};

namespace detail {

inline double clipped_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  return std::clamp(rng.normal(mean, sd), lo, hi);
}

inline const std::string& pick_filler(const TemplateSpec& spec, Rng& rng) {
  return spec.fillers[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(spec.fillers.size()) - 1))];
}

}  // namespace detail

inline SynthCorpus generate_corpus(const TemplateSpec& spec, int n_speakers, int sentences_per_speaker) {
  spec.validate();
  if (n_speakers <= 0) throw OutOfRangeError("generate_corpus: n_speakers must be positive");
  if (sentences_per_speaker <= 0) throw OutOfRangeError("generate_corpus: sentences_per_speaker must be positive");

  SynthCorpus corpus;
  Rng root(spec.seed);

  for (int sp = 0; sp < n_speakers; ++sp) {
    Rng rng = root.derive(0x9000u + static_cast<std::uint64_t>(sp));

    char id_buf[16];
    std::snprintf(id_buf, sizeof id_buf, "spk%04d", sp);
    const std::string speaker_id = id_buf;

    const bool impaired = rng.bernoulli(spec.impaired_fraction);
    SpeakerInfo info;
    info.group = impaired ? "impaired" : "control";
    // Covariates: age shifted slightly by group, education and gender not.
    info.age = std::round(detail::clipped_normal(rng, impaired ? 72.0 : 68.0, 7.0, 50.0, 90.0));
    info.gender = rng.bernoulli(0.5) ? 1 : 0;
    info.education = std::round(detail::clipped_normal(rng, 14.0, 3.0, 8.0, 22.0));
    corpus.manifest[speaker_id] = info;

    // Per-speaker CIU pool: impaired speakers cover less of the picture.
    std::vector<int> all_codes(kCiuCount);
    for (int c = 0; c < kCiuCount; ++c) all_codes[static_cast<std::size_t>(c)] = c;
    rng.shuffle(all_codes);
    const int pool_size = impaired ? spec.unique_pool_impaired : spec.unique_pool_control;
    std::set<CiuId> pool;
    for (int i = 0; i < pool_size; ++i) pool.insert(static_cast<CiuId>(all_codes[static_cast<std::size_t>(i)]));

    const double rep_prob = impaired ? spec.repetition_prob_impaired : spec.repetition_prob_control;
    const double canon_prob = impaired ? spec.canonical_order_prob_impaired : spec.canonical_order_prob_control;
    std::set<CiuId> mentioned;
    bool have_prev = false;
    CiuId prev = CiuId::Boy;  // last CIU of the previous sentence

    for (int s = 0; s < sentences_per_speaker; ++s) {
      const int want = rng.uniform_int(spec.min_cius_per_sentence, spec.max_cius_per_sentence);
      std::vector<CiuId> sentence_cius;
      std::set<CiuId> in_sentence;

      for (int slot = 0; slot < want; ++slot) {
        std::vector<CiuId> rep_candidates;
        for (const CiuId id : mentioned)
          if (!in_sentence.count(id)) rep_candidates.push_back(id);

        CiuId chosen;
        if (!rep_candidates.empty() && rng.bernoulli(rep_prob)) {
          chosen = rep_candidates[static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<int>(rep_candidates.size()) - 1))];
        } else {
          // Fresh draws never pick the previous sentence's last CIU; since
          // the within-sentence set is duplicate-free, repetition_prob = 0
          // then guarantees no adjacent repeats under any sentence ordering.
          std::vector<CiuId> fresh;
          for (const CiuId id : pool)
            if (!in_sentence.count(id) && !(have_prev && id == prev)) fresh.push_back(id);
          if (fresh.empty()) break;
          chosen = fresh[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(fresh.size()) - 1))];
        }
        sentence_cius.push_back(chosen);
        in_sentence.insert(chosen);
        mentioned.insert(chosen);
      }
      if (rng.bernoulli(canon_prob)) std::sort(sentence_cius.begin(), sentence_cius.end());
      if (!sentence_cius.empty()) {
        prev = sentence_cius.back();
        have_prev = true;
      }

      LabeledSentence sentence;
      if (rng.bernoulli(spec.filler_rate)) sentence.tokens.push_back(detail::pick_filler(spec, rng));
      for (std::size_t j = 0; j < sentence_cius.size(); ++j) {
        if (j > 0) {
          sentence.tokens.push_back(detail::pick_filler(spec, rng));  // mandatory separator
          for (int extra = 0; extra < 2 && rng.bernoulli(spec.filler_rate); ++extra)
            sentence.tokens.push_back(detail::pick_filler(spec, rng));
        }
        const auto& phrases = spec.templates[static_cast<std::size_t>(ciu_code(sentence_cius[j]))];
        const auto& phrase =
            phrases[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(phrases.size()) - 1))];
        sentence.tokens.insert(sentence.tokens.end(), phrase.begin(), phrase.end());
      }
      if (rng.bernoulli(spec.filler_rate)) sentence.tokens.push_back(detail::pick_filler(spec, rng));
      sentence.labels = std::move(sentence_cius);
      corpus.entries.push_back({speaker_id, std::move(sentence)});
    }
  }
  return corpus;
}

// Gold ordered sequence per speaker: concatenated sentence labels, in order,
// with sentence indices attached. Speaker order follows first appearance.
inline std::vector<SpeakerSequence> gold_sequences(const std::vector<CorpusEntry>& entries) {
  std::vector<SpeakerSequence> out;
  std::map<std::string, std::size_t> index;
  std::map<std::string, int> sentence_counter;
  for (const auto& e : entries) {
    auto it = index.find(e.speaker_id);
    if (it == index.end()) {
      index[e.speaker_id] = out.size();
      out.push_back({e.speaker_id, {}});
      it = index.find(e.speaker_id);
    }
    const int sent = sentence_counter[e.speaker_id]++;
    for (const CiuId id : e.sentence.labels) out[it->second].sequence.push_back({id, sent});
  }
  return out;
}

}  // namespace ciuseq
