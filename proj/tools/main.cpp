// Command-line front end: synth, parse, train, tag, features, eval.
// Exit codes: 0 success, 1 data or io error, 2 usage error.
#include <ciuseq/ciuseq.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace ciuseq;
namespace fs = std::filesystem;

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spill_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

CoordinateMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return load_coordinate_map(in);
}

CiuDictionary load_dictionary_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return load_dictionary(in);
}

std::vector<CorpusEntry> load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return load_dataset(in);
}

// An empty path (usually an unset shell variable) would silently target the
// current directory; reject it at parse time instead.
const CLI::Validator nonempty(
    [](std::string& s) { return s.empty() ? std::string("path must not be empty") : std::string(); },
    "NONEMPTY");

// Train-stage flags shared by `train` and `eval`; unset flags fall back to
// the --config file, which falls back to the built-in defaults.
struct TrainFlags {
  std::string config_path;
  std::optional<int> epochs, batch_size, embed_dim, attn_blocks;
  std::optional<double> lr_encoder, lr_head, weight_decay, margin, lambda, dropout, threshold;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "train config text file; flags override its values")
        ->check(nonempty);
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "mini-batch size");
    cmd->add_option("--embed-dim", embed_dim, "embedding dimension");
    cmd->add_option("--attn-blocks", attn_blocks, "attention block count");
    cmd->add_option("--lr-encoder", lr_encoder, "encoder learning rate");
    cmd->add_option("--lr-head", lr_head, "classifier head learning rate");
    cmd->add_option("--weight-decay", weight_decay, "decoupled weight decay");
    cmd->add_option("--margin", margin, "ranking loss margin");
    cmd->add_option("--lambda", lambda, "ranking loss mixing weight");
    cmd->add_option("--dropout", dropout, "dropout rate before the head");
    cmd->add_option("--threshold", threshold, "detection probability threshold");
    cmd->add_option("--seed", seed, "training seed");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = train_config_from_text(slurp_file(config_path));
    if (epochs) cfg.epochs = *epochs;
    if (batch_size) cfg.batch_size = *batch_size;
    if (embed_dim) cfg.embed_dim = *embed_dim;
    if (attn_blocks) cfg.attn_blocks = *attn_blocks;
    if (lr_encoder) cfg.lr_encoder = *lr_encoder;
    if (lr_head) cfg.lr_head = *lr_head;
    if (weight_decay) cfg.weight_decay = *weight_decay;
    if (margin) cfg.margin = *margin;
    if (lambda) cfg.lambda = *lambda;
    if (dropout) cfg.dropout = *dropout;
    if (threshold) cfg.detect_threshold = *threshold;
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

int run_synth(const std::string& out_dir, const std::string& spec_path, std::optional<std::uint64_t> seed,
              int speakers, int sentences, bool sparse) {
  TemplateSpec spec = spec_path.empty() ? TemplateSpec::defaults() : template_spec_from_json(slurp_file(spec_path));
  if (seed) spec.seed = *seed;
  spec.validate();

  const SynthCorpus corpus = generate_corpus(spec, speakers, sentences);
  const fs::path dir(out_dir);

  std::ostringstream data_out, manifest_out;
  save_dataset(corpus.entries, data_out);
  save_manifest(corpus.manifest, manifest_out);
  spill_file((dir / "corpus.jsonl").string(), data_out.str());
  spill_file((dir / "manifest.jsonl").string(), manifest_out.str());
  spill_file((dir / "dictionary.txt").string(), dictionary_file_text(spec, sparse));
  spill_file((dir / "spec.json").string(), template_spec_to_json(spec));

  std::cout << "wrote " << corpus.entries.size() << " sentences from " << corpus.manifest.size()
            << " speakers to " << dir.string() << "\n";
  return 0;
}

int run_parse(const std::string& input, const std::string& out, const std::string& tier,
              const std::string& fallback_id, const std::string& manifest_out) {
  ChatOptions opts;
  opts.participant_tier = tier;
  opts.fallback_speaker_id = fallback_id;
  const Transcript t = parse_chat(slurp_file(input), opts);

  std::vector<CorpusEntry> entries;
  for (const auto& sentence : t.tier_sentences(tier)) entries.push_back({t.speaker_id, {sentence, {}}});
  std::ostringstream data_out;
  save_dataset(entries, data_out);
  spill_file(out, data_out.str());

  if (!manifest_out.empty()) {
    const auto age = metadata_age_years(t);
    const auto gender = metadata_gender_code(t);
    const auto education = metadata_education_years(t);
    const auto group = metadata_group(t);
    if (!age || !gender || !education || !group)
      throw MissingKeyError("transcript '" + input + "' lacks the age/sex/education/group metadata a manifest needs");
    Manifest manifest;
    manifest[t.speaker_id] = SpeakerInfo{*age, *gender, *education, *group};
    std::ostringstream mout;
    save_manifest(manifest, mout);
    spill_file(manifest_out, mout.str());
  }

  std::cout << "parsed " << entries.size() << " sentences for speaker " << t.speaker_id << "\n";
  return 0;
}

int run_train(const std::string& data_path, const std::string& out_path, const std::string& log_path,
              const TrainFlags& flags) {
  const TrainConfig cfg = flags.resolve();
  const auto entries = load_dataset_file(data_path);
  std::vector<LabeledSentence> sentences;
  for (const auto& e : entries) sentences.push_back(e.sentence);

  const auto [model, log] = train<float>(sentences, cfg);
  save_checkpoint(model, cfg, out_path);

  if (!log_path.empty()) {
    std::ostringstream out;
    out << "epoch,mean_loss\n";
    for (std::size_t i = 0; i < log.epoch_mean_loss.size(); ++i) out << i + 1 << "," << log.epoch_mean_loss[i] << "\n";
    spill_file(log_path, out.str());
  }

  std::cout << "trained on " << sentences.size() << " sentences for " << cfg.epochs << " epochs, final mean loss "
            << (log.epoch_mean_loss.empty() ? 0.0 : log.epoch_mean_loss.back()) << ", checkpoint " << out_path
            << "\n";
  return 0;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int run_tag(const std::string& tagger, const std::string& input, const std::string& out,
            const std::string& checkpoint_path, const std::string& dictionary_path, const std::string& tier,
            const std::string& fallback_id) {
  std::optional<CiuDictionary> dict;
  std::optional<TaggerModel<float>> model;
  TrainConfig cfg;
  if (tagger == "dict") {
    dict = load_dictionary_file(dictionary_path);
  } else {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    cfg = ck.config;
    model = model_from_checkpoint(ck);
  }

  std::vector<SpeakerSequence> out_rows;
  if (ends_with(input, ".cha")) {
    ChatOptions opts;
    opts.participant_tier = tier;
    opts.fallback_speaker_id = fallback_id;
    const Transcript t = parse_chat(slurp_file(input), opts);
    const CiuSequence seq =
        dict ? tag_transcript_dict(t, *dict, tier) : predict_transcript<float>(t, *model, cfg, tier);
    out_rows.push_back({t.speaker_id, seq});
  } else {
    const auto entries = load_dataset_file(input);
    for (const auto& [speaker, sentences] : group_by_speaker(entries)) {
      CiuSequence seq;
      for (std::size_t i = 0; i < sentences.size(); ++i) {
        const int idx = static_cast<int>(i);
        const CiuSequence tagged = dict ? tag_sentence_dict(sentences[i].tokens, *dict, idx)
                                        : predict<float>(sentences[i].tokens, *model, cfg, idx);
        seq.insert(seq.end(), tagged.begin(), tagged.end());
      }
      out_rows.push_back({speaker, seq});
    }
  }

  std::ostringstream seq_out;
  save_sequences(out_rows, seq_out);
  spill_file(out, seq_out.str());
  std::cout << "tagged " << out_rows.size() << " speaker(s) with the " << tagger << " tagger\n";
  return 0;
}

int run_features(const std::string& input, const std::string& map_path, const std::string& out) {
  const CoordinateMap map = load_map_file(map_path);
  std::ifstream in(input);
  if (!in) throw IoError("cannot open '" + input + "' for reading");
  const auto seqs = load_sequences(in);

  std::vector<std::pair<std::string, FeatureVector>> rows;
  for (const auto& s : seqs) rows.emplace_back(s.speaker_id, compute_features(build_graph(s.sequence, map)));
  spill_file(out, features_csv(rows));
  std::cout << "wrote features for " << rows.size() << " speaker(s) to " << out << "\n";
  return 0;
}

int run_eval(const std::string& data_path, const std::string& manifest_path, const std::string& dictionary_path,
             const std::string& map_path, const std::string& out_dir, int folds, bool inject_gold,
             const TrainFlags& flags) {
  EvalConfig cfg;
  cfg.folds = folds;
  cfg.inject_gold_as_neural = inject_gold;
  cfg.train = flags.resolve();

  const auto entries = load_dataset_file(data_path);
  std::ifstream min(manifest_path);
  if (!min) throw IoError("cannot open '" + manifest_path + "' for reading");
  const Manifest manifest = load_manifest(min);
  const CiuDictionary dict = load_dictionary_file(dictionary_path);
  const CoordinateMap map = load_map_file(map_path);

  const EvalReport report = run_full_eval(entries, manifest, dict, map, cfg);
  write_report(report, out_dir);

  std::cout << "evaluated " << report.speakers.size() << " speakers over " << folds << " folds";
  if (report.mean_ser_neural) std::cout << ", neural mean SER " << *report.mean_ser_neural;
  if (report.mean_ser_dict) std::cout << ", dict mean SER " << *report.mean_ser_dict;
  if (report.mean_pearson_neural) std::cout << ", neural mean r " << *report.mean_pearson_neural;
  if (report.mean_pearson_dict) std::cout << ", dict mean r " << *report.mean_pearson_dict;
  std::cout << ", report in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CIU sequence toolkit: tag picture-description transcripts and analyze narrative paths"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("ciuseq 1.0.0 (checkpoint format ") +
                                        std::to_string(kCheckpointVersion) + ", embeddings format 1)");

  auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  std::string synth_out, synth_spec;
  std::optional<std::uint64_t> synth_seed;
  int synth_speakers = 100, synth_sentences = 20;
  bool synth_sparse = false;
  synth_cmd->add_option("--out", synth_out, "output directory")->required()->check(nonempty);
  synth_cmd->add_option("--spec", synth_spec, "template spec JSON (defaults built in)")->check(nonempty);
  synth_cmd->add_option("--seed", synth_seed, "generator seed (overrides the template file's)");
  synth_cmd->add_option("--speakers", synth_speakers, "number of speakers");
  synth_cmd->add_option("--sentences", synth_sentences, "sentences per speaker");
  synth_cmd->add_flag("--sparse-dictionary", synth_sparse, "emit only the first phrase per unit");

  auto* parse_cmd = app.add_subcommand("parse", "convert a CHAT transcript to dataset records");
  std::string parse_input, parse_out, parse_tier = "PAR", parse_fallback = "unknown", parse_manifest;
  parse_cmd->add_option("--input", parse_input, "CHAT .cha file")->required()->check(nonempty);
  parse_cmd->add_option("--out", parse_out, "output dataset JSONL")->required()->check(nonempty);
  parse_cmd->add_option("--tier", parse_tier, "participant tier");
  parse_cmd->add_option("--speaker-id", parse_fallback, "fallback speaker id");
  parse_cmd->add_option("--manifest-out", parse_manifest, "also write a one-row manifest from the headers")->check(nonempty);

  auto* train_cmd = app.add_subcommand("train", "train the neural tagger");
  std::string train_data, train_out, train_log;
  TrainFlags train_flags;
  train_cmd->add_option("--data", train_data, "labeled dataset JSONL")->required()->check(nonempty);
  train_cmd->add_option("--out", train_out, "checkpoint output path")->required()->check(nonempty);
  train_cmd->add_option("--log", train_log, "per-epoch loss CSV")->check(nonempty);
  train_flags.attach(train_cmd);

  auto* tag_cmd = app.add_subcommand("tag", "tag a transcript or dataset with CIU sequences");
  std::string tag_tagger, tag_input, tag_out, tag_checkpoint, tag_dictionary, tag_tier = "PAR",
              tag_fallback = "unknown";
  tag_cmd->add_option("--tagger", tag_tagger, "neural | dict")
      ->required()
      ->check(CLI::IsMember({"neural", "dict"}));
  tag_cmd->add_option("--input", tag_input, "CHAT .cha file or dataset JSONL")->required()->check(nonempty);
  tag_cmd->add_option("--out", tag_out, "output sequences JSONL")->required()->check(nonempty);
  tag_cmd->add_option("--checkpoint", tag_checkpoint, "trained checkpoint (neural tagger)")->check(nonempty);
  tag_cmd->add_option("--dictionary", tag_dictionary, "phrase dictionary (dict tagger)")->check(nonempty);
  tag_cmd->add_option("--tier", tag_tier, "participant tier for CHAT input");
  tag_cmd->add_option("--speaker-id", tag_fallback, "fallback speaker id for CHAT input");

  auto* features_cmd = app.add_subcommand("features", "compute narrative path features from sequences");
  std::string feat_input, feat_map, feat_out;
  features_cmd->add_option("--input", feat_input, "sequences JSONL")->required()->check(nonempty);
  features_cmd->add_option("--map", feat_map, "coordinate map TSV")->required()->check(nonempty);
  features_cmd->add_option("--out", feat_out, "output feature CSV")->required()->check(nonempty);

  auto* eval_cmd = app.add_subcommand("eval", "run the full cross-validated evaluation");
  std::string eval_data, eval_manifest, eval_dictionary, eval_map, eval_out;
  int eval_folds = 5;
  bool eval_inject = false;
  TrainFlags eval_flags;
  eval_cmd->add_option("--data", eval_data, "labeled dataset JSONL")->required()->check(nonempty);
  eval_cmd->add_option("--manifest", eval_manifest, "speaker manifest JSONL")->required()->check(nonempty);
  eval_cmd->add_option("--dictionary", eval_dictionary, "phrase dictionary")->required()->check(nonempty);
  eval_cmd->add_option("--map", eval_map, "coordinate map TSV")->required()->check(nonempty);
  eval_cmd->add_option("--out", eval_out, "report output directory")->required()->check(nonempty);
  eval_cmd->add_option("--folds", eval_folds, "grouped cross-validation folds");
  eval_cmd->add_flag("--inject-gold", eval_inject, "replace the neural arm with gold labels (oracle run)");
  eval_flags.attach(eval_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd)
      return run_synth(synth_out, synth_spec, synth_seed, synth_speakers, synth_sentences, synth_sparse);
    if (*parse_cmd) return run_parse(parse_input, parse_out, parse_tier, parse_fallback, parse_manifest);
    if (*train_cmd) return run_train(train_data, train_out, train_log, train_flags);
    if (*tag_cmd) {
      if (tag_tagger == "dict" && tag_dictionary.empty()) {
        std::cerr << "tag: --tagger dict requires --dictionary\n";
        return 2;
      }
      if (tag_tagger == "neural" && tag_checkpoint.empty()) {
        std::cerr << "tag: --tagger neural requires --checkpoint\n";
        return 2;
      }
      return run_tag(tag_tagger, tag_input, tag_out, tag_checkpoint, tag_dictionary, tag_tier, tag_fallback);
    }
    if (*features_cmd) return run_features(feat_input, feat_map, feat_out);
    if (*eval_cmd)
      return run_eval(eval_data, eval_manifest, eval_dictionary, eval_map, eval_out, eval_folds, eval_inject,
                      eval_flags);
  } catch (const std::exception& e) {
    std::cerr << argv[0] << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
