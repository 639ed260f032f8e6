#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ciuseq/model.hpp"
#include "ciuseq/text.hpp"
#include "ciuseq/train.hpp"

namespace ciuseq {

static_assert(std::endian::native == std::endian::little, "persistence assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[9] = "CIUTAGCP";
inline constexpr char kEmbeddingMagic[9] = "CIUEMBED";

// Canonical key=value serialization of TrainConfig; doubles use shortest
// round-trip formatting so text -> config -> text is a fixed point.
inline std::string train_config_to_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "epochs=" << cfg.epochs << "\n";
  out << "lr_encoder=" << format_double(cfg.lr_encoder) << "\n";
  out << "lr_head=" << format_double(cfg.lr_head) << "\n";
  out << "weight_decay=" << format_double(cfg.weight_decay) << "\n";
  out << "margin=" << format_double(cfg.margin) << "\n";
  out << "lambda=" << format_double(cfg.lambda) << "\n";
  out << "detect_threshold=" << format_double(cfg.detect_threshold) << "\n";
  out << "batch_size=" << cfg.batch_size << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "dropout=" << format_double(cfg.dropout) << "\n";
  out << "embed_dim=" << cfg.embed_dim << "\n";
  out << "attn_blocks=" << cfg.attn_blocks << "\n";
  out << "adam_beta1=" << format_double(cfg.adam_beta1) << "\n";
  out << "adam_beta2=" << format_double(cfg.adam_beta2) << "\n";
  out << "adam_eps=" << format_double(cfg.adam_eps) << "\n";
  return out.str();
}

inline TrainConfig train_config_from_text(const std::string& text) {
  TrainConfig cfg;
  for (const std::string& raw : split(text, '\n')) {
    const std::string line{trim(raw)};
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key=value, got '" + line + "'");
    const std::string key{trim(line.substr(0, eq))};
    const std::string value{trim(line.substr(eq + 1))};
    try {
      if (key == "epochs") cfg.epochs = parse_int(value);
      else if (key == "lr_encoder") cfg.lr_encoder = parse_double(value);
      else if (key == "lr_head") cfg.lr_head = parse_double(value);
      else if (key == "weight_decay") cfg.weight_decay = parse_double(value);
      else if (key == "margin") cfg.margin = parse_double(value);
      else if (key == "lambda") cfg.lambda = parse_double(value);
      else if (key == "detect_threshold") cfg.detect_threshold = parse_double(value);
      else if (key == "batch_size") cfg.batch_size = parse_int(value);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
      else if (key == "dropout") cfg.dropout = parse_double(value);
      else if (key == "embed_dim") cfg.embed_dim = parse_int(value);
      else if (key == "attn_blocks") cfg.attn_blocks = parse_int(value);
      else if (key == "adam_beta1") cfg.adam_beta1 = parse_double(value);
      else if (key == "adam_beta2") cfg.adam_beta2 = parse_double(value);
      else if (key == "adam_eps") cfg.adam_eps = parse_double(value);
      else throw ParseError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ParseError("config: bad value for '" + key + "': '" + value + "'");
    }
  }
  return cfg;
}

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  Vocab vocab;
  std::vector<NamedTensor> tensors;
};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CorruptTensorError(std::string("truncated ") + what);
  return v;
}

inline std::uint64_t read_u64(std::istream& in, const char* what) {
  std::uint64_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CorruptTensorError(std::string("truncated ") + what);
  return v;
}

inline std::string read_string(std::istream& in, const char* what) {
  const std::uint32_t len = read_u32(in, what);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), static_cast<std::streamsize>(len)))
    throw CorruptTensorError(std::string("truncated ") + what);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const TaggerModel<float>& model, const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  out.write(kCheckpointMagic, 8);
  detail::write_u32(out, kCheckpointVersion);

  const std::string cfg_text = train_config_to_text(cfg);
  detail::write_u64(out, cfg_text.size());
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  detail::write_u32(out, static_cast<std::uint32_t>(model.vocab.tokens.size()));
  for (const auto& tok : model.vocab.tokens) detail::write_string(out, tok);

  // tensor_table wants mutable refs; only reads happen here.
  auto& mutable_model = const_cast<TaggerModel<float>&>(model);
  const auto refs = tensor_table(mutable_model.encoder, mutable_model.head);
  detail::write_u32(out, static_cast<std::uint32_t>(refs.size()));
  for (const auto& ref : refs) {
    detail::write_string(out, ref.name);
    detail::write_u32(out, static_cast<std::uint32_t>(ref.shape.size()));
    for (const std::uint32_t dim : ref.shape) detail::write_u32(out, dim);
    out.write(reinterpret_cast<const char*>(ref.data->data()),
              static_cast<std::streamsize>(ref.data->size() * sizeof(float)));
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CorruptTensorError("'" + path + "' is not a checkpoint file");

  Checkpoint ck;
  ck.version = detail::read_u32(in, "version");
  if (ck.version != kCheckpointVersion)
    throw VersionMismatchError("checkpoint version " + std::to_string(ck.version) + ", expected " +
                               std::to_string(kCheckpointVersion));

  const std::uint64_t cfg_len = detail::read_u64(in, "config block");
  std::string cfg_text(cfg_len, '\0');
  if (cfg_len > 0 && !in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len)))
    throw CorruptTensorError("truncated config block");
  ck.config = train_config_from_text(cfg_text);

  const std::uint32_t vocab_count = detail::read_u32(in, "vocab size");
  ck.vocab.tokens.clear();
  ck.vocab.index.clear();
  for (std::uint32_t i = 0; i < vocab_count; ++i) {
    const std::string tok = detail::read_string(in, "vocab entry");
    ck.vocab.index.emplace(tok, static_cast<int>(ck.vocab.tokens.size()));
    ck.vocab.tokens.push_back(tok);
  }

  const std::uint32_t tensor_count = detail::read_u32(in, "tensor count");
  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    NamedTensor nt;
    nt.name = detail::read_string(in, "tensor name");
    const std::uint32_t ndims = detail::read_u32(in, "tensor rank");
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      nt.shape.push_back(detail::read_u32(in, "tensor shape"));
      total *= nt.shape.back();
    }
    nt.data.resize(total);
    if (total > 0 && !in.read(reinterpret_cast<char*>(nt.data.data()),
                              static_cast<std::streamsize>(total * sizeof(float))))
      throw CorruptTensorError("truncated payload for tensor '" + nt.name + "'");
    for (const auto& prev : ck.tensors)
      if (prev.name == nt.name) throw CorruptTensorError("duplicate tensor '" + nt.name + "'");
    ck.tensors.push_back(std::move(nt));
  }
  return ck;
}

// Rebuild a usable model from a loaded checkpoint; every expected tensor must
// be present with its expected shape.
inline TaggerModel<float> model_from_checkpoint(const Checkpoint& ck) {
  TaggerModel<float> model;
  model.vocab = ck.vocab;
  EncoderParams<float> enc;
  enc.embedding = Mat<float>(static_cast<int>(ck.vocab.tokens.size()), ck.config.embed_dim);
  enc.blocks.assign(static_cast<std::size_t>(ck.config.attn_blocks), AttentionBlock<float>::zeros(ck.config.embed_dim));
  model.encoder = std::move(enc);
  model.head = ClassifierHead<float>{Mat<float>(kCiuCount, ck.config.embed_dim),
                                     std::vector<float>(kCiuCount, 0.0f), ck.config.dropout};

  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ck.tensors) by_name[t.name] = &t;

  for (auto& ref : tensor_table(model.encoder, model.head)) {
    const auto it = by_name.find(ref.name);
    if (it == by_name.end()) throw CorruptTensorError("missing tensor '" + ref.name + "'");
    const NamedTensor& nt = *it->second;
    if (nt.shape != ref.shape) throw CorruptTensorError("shape mismatch for tensor '" + ref.name + "'");
    if (nt.data.size() != ref.data->size()) throw CorruptTensorError("payload mismatch for tensor '" + ref.name + "'");
    std::copy(nt.data.begin(), nt.data.end(), ref.data->begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) throw CorruptTensorError("unexpected tensor '" + by_name.begin()->first + "'");
  return model;
}

// --- external pooled-embedding provider --------------------------------------
//
// Swaps the built-in encoder + mean pooling for vectors computed elsewhere
// (e.g. a full pretrained transformer), keyed by the cleaned sentence text.
// Head training and inference are unchanged.

struct ExternalEmbeddings {
  int dim = 0;
  std::map<std::string, std::vector<float>> vectors;

  static std::string key_for(std::span<const std::string> tokens) {
    return join(std::vector<std::string>(tokens.begin(), tokens.end()), " ");
  }

  const std::vector<float>& lookup(std::span<const std::string> tokens) const {
    const std::string key = key_for(tokens);
    const auto it = vectors.find(key);
    if (it == vectors.end()) throw MissingKeyError("no external embedding for sentence '" + key + "'");
    return it->second;
  }
};

inline void save_external_embeddings(const ExternalEmbeddings& emb, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kEmbeddingMagic, 8);
  detail::write_u32(out, 1);
  detail::write_u32(out, static_cast<std::uint32_t>(emb.dim));
  detail::write_u64(out, emb.vectors.size());
  for (const auto& [key, vec] : emb.vectors) {
    detail::write_string(out, key);
    out.write(reinterpret_cast<const char*>(vec.data()), static_cast<std::streamsize>(vec.size() * sizeof(float)));
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline ExternalEmbeddings load_external_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kEmbeddingMagic, 8) != 0)
    throw CorruptTensorError("'" + path + "' is not an embedding file");
  const std::uint32_t version = detail::read_u32(in, "version");
  if (version != 1) throw VersionMismatchError("embedding file version " + std::to_string(version) + ", expected 1");

  ExternalEmbeddings emb;
  emb.dim = static_cast<int>(detail::read_u32(in, "dimension"));
  if (emb.dim <= 0) throw CorruptTensorError("embedding dimension must be positive");
  const std::uint64_t count = detail::read_u64(in, "record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string key = detail::read_string(in, "record key");
    std::vector<float> vec(static_cast<std::size_t>(emb.dim));
    if (!in.read(reinterpret_cast<char*>(vec.data()), static_cast<std::streamsize>(vec.size() * sizeof(float))))
      throw CorruptTensorError("truncated vector for key '" + key + "'");
    emb.vectors[std::move(key)] = std::move(vec);
  }
  return emb;
}

template <typename S>
std::vector<double> external_logits(std::span<const std::string> tokens, const ExternalEmbeddings& emb,
                                    const ClassifierHead<S>& head) {
  if (emb.dim != head.weight.cols)
    throw DimensionMismatchError("external embedding dim " + std::to_string(emb.dim) + " vs head dim " +
                                 std::to_string(head.weight.cols));
  const auto& vec = emb.lookup(tokens);
  std::vector<double> logits(kCiuCount);
  for (int k = 0; k < kCiuCount; ++k) {
    double acc = static_cast<double>(head.bias[static_cast<std::size_t>(k)]);
    const S* row = head.weight.row(k);
    for (int i = 0; i < head.weight.cols; ++i) acc += static_cast<double>(row[i]) * static_cast<double>(vec[static_cast<std::size_t>(i)]);
    logits[static_cast<std::size_t>(k)] = acc;
  }
  return logits;
}

template <typename S = float>
CiuSequence predict_external(std::span<const std::string> tokens, const ExternalEmbeddings& emb,
                             const ClassifierHead<S>& head, double detect_threshold = 0.5) {
  if (tokens.empty()) return {};
  const auto logits = external_logits(tokens, emb, head);
  CiuSequence out;
  for (const int code : select_and_order(logits, detect_threshold)) out.push_back({static_cast<CiuId>(code), -1});
  return out;
}

// Trains only the classification head on externally provided pooled vectors,
// with the same loss and optimizer as the full model.
template <typename S = float>
ClassifierHead<S> train_head_external(const std::vector<LabeledSentence>& dataset, const ExternalEmbeddings& emb,
                                      const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDatasetError("train_head_external: empty dataset");

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!dataset[i].tokens.empty()) usable.push_back(i);
  if (usable.empty()) throw EmptyDatasetError("train_head_external: every sentence is empty");

  Rng root(cfg.seed);
  Rng init_rng = root.derive(1);
  Rng order_rng = root.derive(2);

  ClassifierHead<S> head = ClassifierHead<S>::random(emb.dim, init_rng, cfg.dropout);
  ClassifierHead<S> grad = ClassifierHead<S>::zeros_like(head);
  ClassifierHead<S> m = ClassifierHead<S>::zeros_like(head);
  ClassifierHead<S> v = ClassifierHead<S>::zeros_like(head);

  std::vector<std::vector<double>> targets(dataset.size());
  std::vector<const std::vector<float>*> pooled(dataset.size(), nullptr);
  for (std::size_t i : usable) {
    targets[i] = multi_hot(dataset[i].labels);
    pooled[i] = &emb.lookup(dataset[i].tokens);  // also validates coverage up front
    if (emb.dim != head.weight.cols)
      throw DimensionMismatchError("external embedding dim " + std::to_string(emb.dim) + " vs head dim " +
                                   std::to_string(head.weight.cols));
  }

  long long step = 0;
  std::vector<double> logits(kCiuCount);
  std::vector<double> d_logits(kCiuCount);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(usable);
    for (std::size_t start = 0; start < usable.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(usable.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double batch_n = static_cast<double>(end - start);
      std::fill(grad.weight.a.begin(), grad.weight.a.end(), S{0});
      std::fill(grad.bias.begin(), grad.bias.end(), S{0});

      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = usable[b];
        const std::vector<float>& x = *pooled[i];
        for (int k = 0; k < kCiuCount; ++k) {
          double acc = static_cast<double>(head.bias[static_cast<std::size_t>(k)]);
          const S* row = head.weight.row(k);
          for (int c = 0; c < head.weight.cols; ++c) acc += static_cast<double>(row[c]) * static_cast<double>(x[static_cast<std::size_t>(c)]);
          logits[static_cast<std::size_t>(k)] = acc;
        }
        batch_loss += total_loss(logits, targets[i], dataset[i].labels, cfg.margin, cfg.lambda);
        std::fill(d_logits.begin(), d_logits.end(), 0.0);
        total_loss_grad(logits, targets[i], dataset[i].labels, cfg.margin, cfg.lambda, d_logits);
        for (int k = 0; k < kCiuCount; ++k) {
          const S gk = static_cast<S>(d_logits[static_cast<std::size_t>(k)] / batch_n);
          grad.bias[static_cast<std::size_t>(k)] += gk;
          S* g_row = grad.weight.row(k);
          for (int c = 0; c < head.weight.cols; ++c) g_row[c] += gk * static_cast<S>(x[static_cast<std::size_t>(c)]);
        }
      }
      if (!std::isfinite(batch_loss / batch_n))
        throw NonFiniteLossError("train_head_external: non-finite loss at epoch " + std::to_string(epoch));

      ++step;
      detail::adamw_step(head.weight.a, grad.weight.a, m.weight.a, v.weight.a, cfg.lr_head, cfg.weight_decay, cfg, step);
      detail::adamw_step(head.bias, grad.bias, m.bias, v.bias, cfg.lr_head, 0.0, cfg, step);
    }
  }
  return head;
}

}  // namespace ciuseq
