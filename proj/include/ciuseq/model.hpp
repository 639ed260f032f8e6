#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ciuseq/chat.hpp"
#include "ciuseq/ciu.hpp"
#include "ciuseq/error.hpp"
#include "ciuseq/loss.hpp"
#include "ciuseq/tensor.hpp"
#include "ciuseq/text.hpp"

namespace ciuseq {

// Whitespace-token vocabulary with reserved padding / out-of-vocabulary ids.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kOov = 1;

  std::vector<std::string> tokens;  // id -> token
  std::unordered_map<std::string, int> index;

  Vocab() {
    tokens = {"<pad>", "<oov>"};
    index = {{"<pad>", kPad}, {"<oov>", kOov}};
  }

  int size() const { return static_cast<int>(tokens.size()); }

  int lookup(const std::string& token) const {
    const auto it = index.find(token);
    return it == index.end() ? kOov : it->second;
  }

  int add(const std::string& token) {
    const auto it = index.find(token);
    if (it != index.end()) return it->second;
    const int id = size();
    tokens.push_back(token);
    index[token] = id;
    return id;
  }

  // Sorted-unique construction so the id assignment is deterministic.
  static Vocab build(const std::vector<LabeledSentence>& dataset) {
    std::map<std::string, int> seen;
    for (const auto& s : dataset)
      for (const auto& tok : s.tokens) seen[tok] = 1;
    Vocab v;
    for (const auto& [tok, _] : seen) v.add(tok);
    return v;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens == b.tokens; }
};

inline std::vector<int> tokenize(std::span<const std::string> tokens, const Vocab& vocab) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.lookup(t));
  return out;
}

// One pre-norm transformer block: single-head self-attention plus a ReLU
// feed-forward, both with residual connections.
template <typename S>
struct AttentionBlock {
  Mat<S> wq, wk, wv, wo;          // d x d
  Mat<S> w1, w2;                  // d x 4d, 4d x d
  std::vector<S> b1, b2;          // 4d, d
  std::vector<S> ln1_g, ln1_b;    // d
  std::vector<S> ln2_g, ln2_b;    // d

  static AttentionBlock zeros(int d) {
    AttentionBlock b;
    b.wq = Mat<S>(d, d);
    b.wk = Mat<S>(d, d);
    b.wv = Mat<S>(d, d);
    b.wo = Mat<S>(d, d);
    b.w1 = Mat<S>(d, 4 * d);
    b.w2 = Mat<S>(4 * d, d);
    b.b1.assign(static_cast<std::size_t>(4 * d), S{0});
    b.b2.assign(static_cast<std::size_t>(d), S{0});
    b.ln1_g.assign(static_cast<std::size_t>(d), S{0});
    b.ln1_b.assign(static_cast<std::size_t>(d), S{0});
    b.ln2_g.assign(static_cast<std::size_t>(d), S{0});
    b.ln2_b.assign(static_cast<std::size_t>(d), S{0});
    return b;
  }

  static AttentionBlock random(int d, Rng& rng) {
    AttentionBlock b;
    const double proj = 1.0 / std::sqrt(static_cast<double>(d));
    b.wq = Mat<S>::randn(d, d, proj, rng);
    b.wk = Mat<S>::randn(d, d, proj, rng);
    b.wv = Mat<S>::randn(d, d, proj, rng);
    b.wo = Mat<S>::randn(d, d, proj, rng);
    b.w1 = Mat<S>::randn(d, 4 * d, std::sqrt(2.0 / d), rng);
    b.w2 = Mat<S>::randn(4 * d, d, std::sqrt(2.0 / (4.0 * d)), rng);
    b.b1.assign(static_cast<std::size_t>(4 * d), S{0});
    b.b2.assign(static_cast<std::size_t>(d), S{0});
    b.ln1_g.assign(static_cast<std::size_t>(d), S{1});
    b.ln1_b.assign(static_cast<std::size_t>(d), S{0});
    b.ln2_g.assign(static_cast<std::size_t>(d), S{1});
    b.ln2_b.assign(static_cast<std::size_t>(d), S{0});
    return b;
  }

  friend bool operator==(const AttentionBlock&, const AttentionBlock&) = default;
};

// Trainable token embeddings, optional attention blocks, mean pooling.
template <typename S>
struct EncoderParams {
  Mat<S> embedding;  // V x d
  std::vector<AttentionBlock<S>> blocks;

  int dim() const { return embedding.cols; }
  int vocab_size() const { return embedding.rows; }

  static EncoderParams random(int vocab_size, int d, int n_blocks, Rng& rng) {
    EncoderParams enc;
    enc.embedding = Mat<S>::randn(vocab_size, d, 0.1, rng);
    for (int i = 0; i < n_blocks; ++i) enc.blocks.push_back(AttentionBlock<S>::random(d, rng));
    return enc;
  }

  static EncoderParams zeros_like(const EncoderParams& other) {
    EncoderParams enc;
    enc.embedding = Mat<S>(other.embedding.rows, other.embedding.cols);
    for (std::size_t i = 0; i < other.blocks.size(); ++i)
      enc.blocks.push_back(AttentionBlock<S>::zeros(other.dim()));
    return enc;
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Linear classification layer over the pooled sentence vector.
template <typename S>
struct ClassifierHead {
  Mat<S> weight;        // kCiuCount x d
  std::vector<S> bias;  // kCiuCount
  double dropout = 0.2;  // applied to the pooled vector in train mode

  int dim() const { return weight.cols; }

  static ClassifierHead random(int d, Rng& rng, double dropout_rate) {
    ClassifierHead h;
    h.weight = Mat<S>::randn(kCiuCount, d, 0.1, rng);
    h.bias.assign(kCiuCount, S{0});
    h.dropout = dropout_rate;
    return h;
  }

  static ClassifierHead zeros_like(const ClassifierHead& other) {
    ClassifierHead h;
    h.weight = Mat<S>(other.weight.rows, other.weight.cols);
    h.bias.assign(other.bias.size(), S{0});
    h.dropout = other.dropout;
    return h;
  }

  friend bool operator==(const ClassifierHead& a, const ClassifierHead& b) {
    return a.weight == b.weight && a.bias == b.bias && a.dropout == b.dropout;
  }
};

struct TrainConfig {
  int epochs = 50;
  double lr_encoder = 2e-5;
  double lr_head = 1e-3;
  double weight_decay = 0.01;
  double margin = 1.0;
  double lambda = 0.1;           // rank-loss mixing weight
  double detect_threshold = 0.5;  // p*
  int batch_size = 32;
  std::uint64_t seed = 7;
  double dropout = 0.2;
  int embed_dim = 32;
  int attn_blocks = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (epochs < 1) throw OutOfRangeError("epochs must be >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw OutOfRangeError("lambda must lie in [0,1]");
    if (!(margin >= 0.0)) throw OutOfRangeError("margin must be >= 0");
    if (!(detect_threshold > 0.0 && detect_threshold < 1.0))
      throw OutOfRangeError("detection threshold must lie in (0,1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw OutOfRangeError("dropout must lie in [0,1)");
    if (batch_size < 1) throw OutOfRangeError("batch size must be >= 1");
    if (embed_dim < 1) throw OutOfRangeError("embedding dim must be >= 1");
    if (attn_blocks < 0) throw OutOfRangeError("attention block count must be >= 0");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class RunMode { Train, Eval };

template <typename S>
struct BlockCache {
  Mat<S> x_in, n1hat, n1, q, k, v, attn, h, y1, n2hat, n2, ff_pre, ff_act;
  std::vector<S> ln1_inv_std, ln2_inv_std;
};

template <typename S>
struct ForwardCache {
  std::vector<int> indices;
  Mat<S> x0;
  std::vector<BlockCache<S>> blocks;
  std::vector<S> pooled;
  std::vector<S> dropout_scale;   // per-dim factor: 0 or 1/(1-p); empty in eval mode
  std::vector<S> pooled_dropped;
  Mat<S> x_final;
};

namespace detail {

template <typename S>
inline constexpr S kLayerNormEps = static_cast<S>(1e-5);

// Row-wise layer norm; writes the normalized rows and caches 1/std per row.
template <typename S>
void layer_norm_forward(const Mat<S>& x, const std::vector<S>& gain, const std::vector<S>& bias,
                        Mat<S>& xhat, Mat<S>& out, std::vector<S>& inv_std) {
  const int t_len = x.rows, d = x.cols;
  xhat = Mat<S>(t_len, d);
  out = Mat<S>(t_len, d);
  inv_std.assign(static_cast<std::size_t>(t_len), S{0});
  for (int t = 0; t < t_len; ++t) {
    const S* row = x.row(t);
    S mean{0};
    for (int i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<S>(d);
    S var{0};
    for (int i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<S>(d);
    const S istd = S{1} / std::sqrt(var + kLayerNormEps<S>);
    inv_std[static_cast<std::size_t>(t)] = istd;
    for (int i = 0; i < d; ++i) {
      const S h = (row[i] - mean) * istd;
      xhat(t, i) = h;
      out(t, i) = gain[static_cast<std::size_t>(i)] * h + bias[static_cast<std::size_t>(i)];
    }
  }
}

template <typename S>
void block_forward(const AttentionBlock<S>& blk, const Mat<S>& x, BlockCache<S>& cache) {
  const int t_len = x.rows, d = x.cols;
  cache.x_in = x;
  layer_norm_forward(x, blk.ln1_g, blk.ln1_b, cache.n1hat, cache.n1, cache.ln1_inv_std);

  cache.q = Mat<S>(t_len, d);
  cache.k = Mat<S>(t_len, d);
  cache.v = Mat<S>(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    matvec_transpose_add(blk.wq, cache.n1.row(t), cache.q.row(t));
    matvec_transpose_add(blk.wk, cache.n1.row(t), cache.k.row(t));
    matvec_transpose_add(blk.wv, cache.n1.row(t), cache.v.row(t));
  }

  const S inv_sqrt_d = S{1} / std::sqrt(static_cast<S>(d));
  cache.attn = Mat<S>(t_len, t_len);
  for (int t = 0; t < t_len; ++t) {
    S max_score = std::numeric_limits<S>::lowest();
    for (int u = 0; u < t_len; ++u) {
      S score{0};
      for (int i = 0; i < d; ++i) score += cache.q(t, i) * cache.k(u, i);
      score *= inv_sqrt_d;
      cache.attn(t, u) = score;
      max_score = std::max(max_score, score);
    }
    S denom{0};
    for (int u = 0; u < t_len; ++u) {
      const S e = std::exp(cache.attn(t, u) - max_score);
      cache.attn(t, u) = e;
      denom += e;
    }
    for (int u = 0; u < t_len; ++u) cache.attn(t, u) /= denom;
  }

  cache.h = Mat<S>(t_len, d);
  for (int t = 0; t < t_len; ++t)
    for (int u = 0; u < t_len; ++u) {
      const S w = cache.attn(t, u);
      for (int i = 0; i < d; ++i) cache.h(t, i) += w * cache.v(u, i);
    }

  cache.y1 = x;
  for (int t = 0; t < t_len; ++t) matvec_transpose_add(blk.wo, cache.h.row(t), cache.y1.row(t));

  layer_norm_forward(cache.y1, blk.ln2_g, blk.ln2_b, cache.n2hat, cache.n2, cache.ln2_inv_std);

  const int hidden = blk.w1.cols;
  cache.ff_pre = Mat<S>(t_len, hidden);
  cache.ff_act = Mat<S>(t_len, hidden);
  for (int t = 0; t < t_len; ++t) {
    S* pre = cache.ff_pre.row(t);
    for (int i = 0; i < hidden; ++i) pre[i] = blk.b1[static_cast<std::size_t>(i)];
    matvec_transpose_add(blk.w1, cache.n2.row(t), pre);
    for (int i = 0; i < hidden; ++i) cache.ff_act(t, i) = pre[i] > S{0} ? pre[i] : S{0};
  }
}

// Output of a block: y1 + ff_act * w2 + b2; computed on demand from a cache.
template <typename S>
Mat<S> block_output(const AttentionBlock<S>& blk, const BlockCache<S>& cache) {
  Mat<S> out = cache.y1;
  for (int t = 0; t < out.rows; ++t) {
    S* row = out.row(t);
    for (int i = 0; i < out.cols; ++i) row[i] += blk.b2[static_cast<std::size_t>(i)];
    matvec_transpose_add(blk.w2, cache.ff_act.row(t), row);
  }
  return out;
}

}  // namespace detail

// Embed -> attention blocks -> mean pool -> dropout (train mode) -> affine
// head. Returns the 23 logits; fills `cache` when given (needed for
// backprop). Throws EmptyInputError on an empty index list.
template <typename S>
std::vector<double> forward_logits(std::span<const int> indices, const EncoderParams<S>& enc,
                                   const ClassifierHead<S>& head, RunMode mode, Rng* rng,
                                   ForwardCache<S>* cache = nullptr) {
  if (indices.empty()) throw EmptyInputError("forward_logits: empty token index list");
  const int t_len = static_cast<int>(indices.size());
  const int d = enc.dim();

  ForwardCache<S> local;
  ForwardCache<S>& c = cache ? *cache : local;
  c = ForwardCache<S>{};
  c.indices.assign(indices.begin(), indices.end());

  c.x0 = Mat<S>(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    const S* src = enc.embedding.row(indices[static_cast<std::size_t>(t)]);
    std::copy(src, src + d, c.x0.row(t));
  }

  Mat<S> x = c.x0;
  c.blocks.resize(enc.blocks.size());
  for (std::size_t b = 0; b < enc.blocks.size(); ++b) {
    detail::block_forward(enc.blocks[b], x, c.blocks[b]);
    x = detail::block_output(enc.blocks[b], c.blocks[b]);
  }
  c.x_final = x;

  c.pooled.assign(static_cast<std::size_t>(d), S{0});
  for (int t = 0; t < t_len; ++t) {
    const S* row = x.row(t);
    for (int i = 0; i < d; ++i) c.pooled[static_cast<std::size_t>(i)] += row[i];
  }
  for (auto& v : c.pooled) v /= static_cast<S>(t_len);

  c.pooled_dropped = c.pooled;
  if (mode == RunMode::Train && head.dropout > 0.0) {
    if (rng == nullptr) throw EmptyInputError("forward_logits: train mode with dropout requires an rng");
    const S keep_scale = static_cast<S>(1.0 / (1.0 - head.dropout));
    c.dropout_scale.assign(static_cast<std::size_t>(d), S{0});
    for (int i = 0; i < d; ++i) {
      const bool keep = !rng->bernoulli(head.dropout);
      c.dropout_scale[static_cast<std::size_t>(i)] = keep ? keep_scale : S{0};
      c.pooled_dropped[static_cast<std::size_t>(i)] *= c.dropout_scale[static_cast<std::size_t>(i)];
    }
  }

  std::vector<S> logits_s(kCiuCount, S{0});
  matvec_add(head.weight, c.pooled_dropped.data(), logits_s.data());
  std::vector<double> logits(kCiuCount);
  for (int k = 0; k < kCiuCount; ++k)
    logits[static_cast<std::size_t>(k)] =
        static_cast<double>(logits_s[static_cast<std::size_t>(k)] + head.bias[static_cast<std::size_t>(k)]);
  return logits;
}

// sigma(s) > p*  <=>  s > logit(p*); selection and ordering both work on raw
// logits so any threshold-preserving transform leaves the output unchanged.
inline std::vector<int> select_and_order(std::span<const double> logits, double detect_threshold) {
  const double cut = std::log(detect_threshold / (1.0 - detect_threshold));
  std::vector<int> picked;
  for (int k = 0; k < kCiuCount; ++k)
    if (logits[static_cast<std::size_t>(k)] > cut) picked.push_back(k);
  std::sort(picked.begin(), picked.end(), [&](int a, int b) {
    const double sa = logits[static_cast<std::size_t>(a)], sb = logits[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;  // equal logits: ascending CIU code
  });
  return picked;
}

template <typename S>
struct TaggerModel {
  Vocab vocab;
  EncoderParams<S> encoder;
  ClassifierHead<S> head;
};

// Detect CIUs above the probability threshold and order them by descending
// logit. Empty input yields an empty sequence.
template <typename S>
CiuSequence predict(std::span<const std::string> tokens, const TaggerModel<S>& model, const TrainConfig& cfg,
                    int sentence_index = -1) {
  if (tokens.empty()) return {};
  const std::vector<int> indices = tokenize(tokens, model.vocab);
  const std::vector<double> logits = forward_logits<S>(indices, model.encoder, model.head, RunMode::Eval, nullptr);
  CiuSequence out;
  for (int code : select_and_order(logits, cfg.detect_threshold))
    out.push_back({static_cast<CiuId>(code), sentence_index});
  return out;
}

// Per-sentence prediction over the participant tier, concatenated in
// sentence order.
template <typename S>
CiuSequence predict_transcript(const Transcript& t, const TaggerModel<S>& model, const TrainConfig& cfg,
                               std::string_view participant_tier = "PAR") {
  CiuSequence out;
  int sentence_index = 0;
  for (const auto& sentence : t.tier_sentences(participant_tier)) {
    const CiuSequence tagged = predict<S>(sentence, model, cfg, sentence_index);
    out.insert(out.end(), tagged.begin(), tagged.end());
    ++sentence_index;
  }
  return out;
}

}  // namespace ciuseq
