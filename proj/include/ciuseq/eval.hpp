#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ciuseq/dataset.hpp"
#include "ciuseq/dictionary.hpp"
#include "ciuseq/graph.hpp"
#include "ciuseq/stats.hpp"
#include "ciuseq/train.hpp"

namespace ciuseq {

struct EvalConfig {
  int folds = 5;
  TrainConfig train;
  // Replaces the neural arm's predictions with the gold labels; the neural
  // columns then act as a self-consistency oracle (r = 1, zero edits).
  bool inject_gold_as_neural = false;
};

struct SpeakerEvalRow {
  std::string speaker_id;
  int fold = 0;
  AlignmentReport alignment_neural;  // against the gold sequence
  AlignmentReport alignment_dict;
  FeatureVector features_gold;
  FeatureVector features_neural;
  FeatureVector features_dict;
};

struct PearsonRow {
  std::string feature;
  std::string arm;  // "neural" | "dict"
  int pairs_used = 0;
  int pairs_dropped = 0;
  std::optional<PearsonResult> result;
  std::string note;  // reason when result is absent
};

struct AncovaRow {
  std::string arm;
  AncovaResult result;
  std::string note;  // reason when the test could not run
  bool ok = false;
};

struct EvalReport {
  std::vector<FoldSplit> folds;
  std::vector<ClassificationReport> fold_detection_neural;
  std::vector<ClassificationReport> fold_detection_dict;
  AggregatedReport detection_neural;
  AggregatedReport detection_dict;
  std::vector<TrainLog> fold_train_logs;
  std::vector<SpeakerEvalRow> speakers;
  std::vector<PearsonRow> pearson;
  std::vector<AncovaRow> ancova_gold;
  std::vector<AncovaRow> ancova_neural;
  std::vector<AncovaRow> ancova_dict;
  std::optional<double> mean_ser_neural;
  std::optional<double> mean_ser_dict;
  std::optional<double> mean_pearson_neural;
  std::optional<double> mean_pearson_dict;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<CiuId> labels_of(const CiuSequence& seq) { return sequence_ids(seq); }

inline std::optional<double> mean_defined_ser(const std::vector<SpeakerEvalRow>& rows, bool neural) {
  std::vector<double> vals;
  for (const auto& r : rows) {
    const auto& rate = neural ? r.alignment_neural.sequence_error_rate : r.alignment_dict.sequence_error_rate;
    if (rate.has_value()) vals.push_back(*rate);
  }
  if (vals.empty()) return std::nullopt;
  return mean_of(vals);
}

inline std::vector<AncovaRow> ancova_arm(const std::string& arm, const std::vector<SpeakerEvalRow>& rows,
                                         const Manifest& manifest,
                                         FeatureVector SpeakerEvalRow::*features) {
  static const std::vector<std::string> kCovariateNames = {"age", "gender", "education", "unique_nodes"};
  std::vector<AncovaRow> out;
  for (int f = 0; f < FeatureVector::kCount; ++f) {
    const std::string& feature_name = FeatureVector::names()[static_cast<std::size_t>(f)];
    std::vector<double> y;
    std::vector<int> group;
    std::vector<std::vector<double>> covs;
    for (const auto& row : rows) {
      const FeatureVector& fv = row.*features;
      const auto& value = fv.at(f);
      if (!value.has_value()) continue;
      if (!fv.unique_nodes.has_value()) continue;  // covariate source
      const auto it = manifest.find(row.speaker_id);
      if (it == manifest.end())
        throw MissingKeyError("ancova: speaker '" + row.speaker_id + "' missing from manifest");
      y.push_back(*value);
      group.push_back(it->second.group == "impaired" ? 1 : 0);
      covs.push_back({it->second.age, static_cast<double>(it->second.gender), it->second.education,
                      *fv.unique_nodes});
    }
    AncovaRow row;
    row.arm = arm;
    row.result.feature = feature_name;
    try {
      row.result = ancova_f(feature_name, y, group, covs, kCovariateNames);
      row.ok = true;
    } catch (const Error& e) {
      row.note = e.what();
      row.result.n_used = static_cast<int>(y.size());
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline void pearson_arm(const std::string& arm, const std::vector<SpeakerEvalRow>& rows,
                        FeatureVector SpeakerEvalRow::*features, std::vector<PearsonRow>& out) {
  for (int f = 0; f < FeatureVector::kCount; ++f) {
    PearsonRow pr;
    pr.feature = FeatureVector::names()[static_cast<std::size_t>(f)];
    pr.arm = arm;
    std::vector<double> x, y;
    for (const auto& row : rows) {
      const auto& gold = row.features_gold.at(f);
      const auto& pred = (row.*features).at(f);
      if (gold.has_value() && pred.has_value()) {
        x.push_back(*gold);
        y.push_back(*pred);
      } else {
        ++pr.pairs_dropped;
      }
    }
    pr.pairs_used = static_cast<int>(x.size());
    try {
      pr.result = pearson_r(x, y);
    } catch (const Error& e) {
      pr.note = e.what();
    }
    out.push_back(std::move(pr));
  }
}

}  // namespace detail

// Full cross-validated evaluation battery: per-fold training and detection
// metrics, speaker-level sequence alignment, path features for the gold,
// neural, and dictionary arms, feature correlations against gold, and
// per-arm group ANCOVAs.
inline EvalReport run_full_eval(const std::vector<CorpusEntry>& entries, const Manifest& manifest,
                                const CiuDictionary& dict, const CoordinateMap& map, const EvalConfig& cfg) {
  if (entries.empty()) throw EmptyDatasetError("run_full_eval: empty dataset");

  const auto by_speaker = group_by_speaker(entries);
  std::vector<std::string> speaker_ids;
  for (const auto& [id, sentences] : by_speaker) speaker_ids.push_back(id);

  EvalReport report;
  report.seed = cfg.train.seed;
  report.folds = grouped_kfold(speaker_ids, cfg.folds, cfg.train.seed);

  std::map<std::string, int> fold_of;
  for (const auto& fold : report.folds)
    for (const auto& id : fold.eval_speakers) fold_of[id] = fold.fold;

  std::map<std::string, const std::vector<LabeledSentence>*> sentences_of;
  for (const auto& [id, sentences] : by_speaker) sentences_of[id] = &sentences;

  std::map<std::string, CiuSequence> neural_seq, dict_seq, gold_seq;
  std::map<std::string, std::vector<std::vector<CiuId>>> neural_sets, dict_sets, gold_sets;

  for (const auto& fold : report.folds) {
    std::vector<LabeledSentence> train_sentences;
    for (const auto& id : fold.train_speakers)
      for (const auto& s : *sentences_of.at(id)) train_sentences.push_back(s);

    TrainConfig fold_cfg = cfg.train;
    fold_cfg.seed = Rng::mix(cfg.train.seed ^ (0xF01Du + static_cast<std::uint64_t>(fold.fold)));
    auto [model, log] = train<float>(train_sentences, fold_cfg);
    report.fold_train_logs.push_back(std::move(log));

    for (const auto& id : fold.eval_speakers) {
      const auto& sentences = *sentences_of.at(id);
      CiuSequence gold, neural, dicted;
      std::vector<std::vector<CiuId>> gs, ns, ds;
      for (std::size_t s = 0; s < sentences.size(); ++s) {
        const int sent = static_cast<int>(s);
        for (const CiuId id_label : sentences[s].labels) gold.push_back({id_label, sent});
        gs.push_back(sentences[s].labels);

        CiuSequence pred = cfg.inject_gold_as_neural
                               ? CiuSequence{}
                               : predict<float>(sentences[s].tokens, model, fold_cfg, sent);
        if (cfg.inject_gold_as_neural)
          for (const CiuId id_label : sentences[s].labels) pred.push_back({id_label, sent});
        ns.push_back(detail::labels_of(pred));
        neural.insert(neural.end(), pred.begin(), pred.end());

        const CiuSequence dpred = tag_sentence_dict(sentences[s].tokens, dict, sent);
        ds.push_back(detail::labels_of(dpred));
        dicted.insert(dicted.end(), dpred.begin(), dpred.end());
      }
      gold_seq[id] = std::move(gold);
      neural_seq[id] = std::move(neural);
      dict_seq[id] = std::move(dicted);
      gold_sets[id] = std::move(gs);
      neural_sets[id] = std::move(ns);
      dict_sets[id] = std::move(ds);
    }

    // Fold-level detection over all eval sentences of this fold.
    std::vector<std::vector<CiuId>> fold_gold, fold_neural, fold_dict;
    for (const auto& id : fold.eval_speakers) {
      for (const auto& s : gold_sets[id]) fold_gold.push_back(s);
      for (const auto& s : neural_sets[id]) fold_neural.push_back(s);
      for (const auto& s : dict_sets[id]) fold_dict.push_back(s);
    }
    report.fold_detection_neural.push_back(detection_report(fold_neural, fold_gold));
    report.fold_detection_dict.push_back(detection_report(fold_dict, fold_gold));
  }

  report.detection_neural = aggregate_reports(report.fold_detection_neural);
  report.detection_dict = aggregate_reports(report.fold_detection_dict);

  // Speaker rows in first-appearance order.
  for (const auto& [id, sentences] : by_speaker) {
    SpeakerEvalRow row;
    row.speaker_id = id;
    row.fold = fold_of.at(id);
    row.alignment_neural = levenshtein_align(gold_seq.at(id), neural_seq.at(id));
    row.alignment_dict = levenshtein_align(gold_seq.at(id), dict_seq.at(id));
    row.features_gold = compute_features(build_graph(gold_seq.at(id), map));
    row.features_neural = compute_features(build_graph(neural_seq.at(id), map));
    row.features_dict = compute_features(build_graph(dict_seq.at(id), map));
    report.speakers.push_back(std::move(row));
  }

  report.mean_ser_neural = detail::mean_defined_ser(report.speakers, true);
  report.mean_ser_dict = detail::mean_defined_ser(report.speakers, false);

  detail::pearson_arm("neural", report.speakers, &SpeakerEvalRow::features_neural, report.pearson);
  detail::pearson_arm("dict", report.speakers, &SpeakerEvalRow::features_dict, report.pearson);

  std::vector<double> rn, rd;
  for (const auto& pr : report.pearson)
    if (pr.result.has_value()) (pr.arm == "neural" ? rn : rd).push_back(pr.result->r);
  if (!rn.empty()) report.mean_pearson_neural = mean_of(rn);
  if (!rd.empty()) report.mean_pearson_dict = mean_of(rd);

  report.ancova_gold = detail::ancova_arm("gold", report.speakers, manifest, &SpeakerEvalRow::features_gold);
  report.ancova_neural = detail::ancova_arm("neural", report.speakers, manifest, &SpeakerEvalRow::features_neural);
  report.ancova_dict = detail::ancova_arm("dict", report.speakers, manifest, &SpeakerEvalRow::features_dict);
  return report;
}

// --- report serialization ------------------------------------------------------

namespace detail {

inline std::string opt_cell(const std::optional<double>& v) { return v.has_value() ? format_double(*v) : ""; }

inline void detection_csv_arm(std::ostream& out, const std::string& arm,
                              const std::vector<ClassificationReport>& folds, const AggregatedReport& agg) {
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& rep = folds[f];
    for (int c = 0; c < kCiuCount; ++c) {
      const auto& cell = rep.per_ciu[static_cast<std::size_t>(c)];
      out << arm << ",fold" << f << "," << canonical_name(static_cast<CiuId>(c)) << "," << cell.tp << ","
          << cell.fp << "," << cell.fn << "," << opt_cell(cell.precision) << "," << opt_cell(cell.recall) << "\n";
    }
    out << arm << ",fold" << f << ",micro," << rep.tp << "," << rep.fp << "," << rep.fn << ","
        << opt_cell(rep.micro_precision) << "," << opt_cell(rep.micro_recall) << "\n";
  }
  const auto agg_rows = [&](const char* scope, auto pick) {
    for (int c = 0; c < kCiuCount; ++c) {
      const FoldSummary& p = agg.precision[static_cast<std::size_t>(c)];
      const FoldSummary& r = agg.recall[static_cast<std::size_t>(c)];
      out << arm << "," << scope << "," << canonical_name(static_cast<CiuId>(c)) << ",,,," << opt_cell(pick(p))
          << "," << opt_cell(pick(r)) << "\n";
    }
    out << arm << "," << scope << ",micro,,,," << opt_cell(pick(agg.micro_precision)) << ","
        << opt_cell(pick(agg.micro_recall)) << "\n";
  };
  agg_rows("mean", [](const FoldSummary& s) { return s.mean; });
  agg_rows("median", [](const FoldSummary& s) { return s.median; });
  agg_rows("std", [](const FoldSummary& s) { return s.stddev; });
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void ancova_csv(const std::filesystem::path& path, const std::vector<AncovaRow>& rows) {
  std::ostringstream out;
  out << "feature,n,f_value,p_value,covariates,note\n";
  for (const auto& row : rows) {
    out << row.result.feature << "," << row.result.n_used << ",";
    if (row.ok) out << format_double(row.result.f_value) << "," << format_double(row.result.p_value);
    else out << ",";
    out << "," << join(row.result.covariates, ";") << "," << row.note << "\n";
  }
  write_text_file(path, out.str());
}

}  // namespace detail

// Writes the report bundle: detection.csv, ser.csv, pearson.csv,
// ancova_<arm>.csv, features_<arm>.csv and summary.txt. Output is
// byte-deterministic for a given report.
inline void write_report(const EvalReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory '" + out_dir + "': " + ec.message());

  {
    std::ostringstream out;
    out << "arm,scope,ciu,tp,fp,fn,precision,recall\n";
    detail::detection_csv_arm(out, "neural", report.fold_detection_neural, report.detection_neural);
    detail::detection_csv_arm(out, "dict", report.fold_detection_dict, report.detection_dict);
    detail::write_text_file(dir / "detection.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "speaker_id,fold,arm,ref_len,hyp_len,matches,insertions,deletions,substitutions,"
           "insertion_rate,deletion_rate,substitution_rate,sequence_error_rate\n";
    const auto row = [&](const SpeakerEvalRow& r, const char* arm, const AlignmentReport& a) {
      out << r.speaker_id << "," << r.fold << "," << arm << "," << a.ref_len << "," << a.hyp_len << ","
          << a.matches << "," << a.insertions << "," << a.deletions << "," << a.substitutions << ","
          << detail::opt_cell(a.insertion_rate) << "," << detail::opt_cell(a.deletion_rate) << ","
          << detail::opt_cell(a.substitution_rate) << "," << detail::opt_cell(a.sequence_error_rate) << "\n";
    };
    for (const auto& r : report.speakers) {
      row(r, "neural", r.alignment_neural);
      row(r, "dict", r.alignment_dict);
    }
    detail::write_text_file(dir / "ser.csv", out.str());
  }
  {
    std::ostringstream out;
    out << "feature,arm,pairs_used,pairs_dropped,r,p,note\n";
    for (const auto& pr : report.pearson) {
      out << pr.feature << "," << pr.arm << "," << pr.pairs_used << "," << pr.pairs_dropped << ",";
      if (pr.result.has_value()) out << format_double(pr.result->r) << "," << format_double(pr.result->p);
      else out << ",";
      out << "," << pr.note << "\n";
    }
    detail::write_text_file(dir / "pearson.csv", out.str());
  }
  detail::ancova_csv(dir / "ancova_gold.csv", report.ancova_gold);
  detail::ancova_csv(dir / "ancova_neural.csv", report.ancova_neural);
  detail::ancova_csv(dir / "ancova_dict.csv", report.ancova_dict);

  const auto features_file = [&](const char* name, FeatureVector SpeakerEvalRow::*features) {
    std::vector<std::pair<std::string, FeatureVector>> rows;
    for (const auto& r : report.speakers) rows.push_back({r.speaker_id, r.*features});
    detail::write_text_file(dir / name, features_csv(rows));
  };
  features_file("features_gold.csv", &SpeakerEvalRow::features_gold);
  features_file("features_neural.csv", &SpeakerEvalRow::features_neural);
  features_file("features_dict.csv", &SpeakerEvalRow::features_dict);

  {
    std::ostringstream out;
    out << "folds: " << report.folds.size() << "\n";
    out << "seed: " << report.seed << "\n";
    out << "speakers: " << report.speakers.size() << "\n";
    out << "micro_precision_neural_mean: " << detail::opt_cell(report.detection_neural.micro_precision.mean) << "\n";
    out << "micro_recall_neural_mean: " << detail::opt_cell(report.detection_neural.micro_recall.mean) << "\n";
    out << "micro_precision_dict_mean: " << detail::opt_cell(report.detection_dict.micro_precision.mean) << "\n";
    out << "micro_recall_dict_mean: " << detail::opt_cell(report.detection_dict.micro_recall.mean) << "\n";
    out << "mean_ser_neural: " << detail::opt_cell(report.mean_ser_neural) << "\n";
    out << "mean_ser_dict: " << detail::opt_cell(report.mean_ser_dict) << "\n";
    out << "mean_pearson_neural: " << detail::opt_cell(report.mean_pearson_neural) << "\n";
    out << "mean_pearson_dict: " << detail::opt_cell(report.mean_pearson_dict) << "\n";
    detail::write_text_file(dir / "summary.txt", out.str());
  }
}

}  // namespace ciuseq
