#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "ciuseq/model.hpp"
#include "ciuseq/rng.hpp"

using namespace ciuseq;

namespace {

using Vec = std::vector<double>;
using Grid = std::vector<Vec>;

Grid mat_to_grid(const Mat<double>& m) {
  Grid g(static_cast<std::size_t>(m.rows), Vec(static_cast<std::size_t>(m.cols)));
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) g[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return g;
}

// out = x * W with W given as (in x out).
Vec vec_mat(const Vec& x, const Grid& w) {
  Vec out(w[0].size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += x[i] * w[i][j];
  return out;
}

Vec layer_norm_ref(const Vec& x, const Vec& g, const Vec& b) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = g[i] * ((x[i] - mean) * inv) + b[i];
  return out;
}

// From-definition re-implementation of the encoder + head in plain
// double arithmetic, structured nothing like the library's version.
Vec forward_ref(const std::vector<int>& idx, const EncoderParams<double>& enc,
                const ClassifierHead<double>& head) {
  const std::size_t t_len = idx.size();
  const std::size_t d = static_cast<std::size_t>(enc.dim());
  const Grid emb = mat_to_grid(enc.embedding);

  Grid x(t_len);
  for (std::size_t t = 0; t < t_len; ++t) x[t] = emb[static_cast<std::size_t>(idx[t])];

  for (const auto& blk : enc.blocks) {
    const Grid wq = mat_to_grid(blk.wq), wk = mat_to_grid(blk.wk), wv = mat_to_grid(blk.wv),
               wo = mat_to_grid(blk.wo), w1 = mat_to_grid(blk.w1), w2 = mat_to_grid(blk.w2);
    Grid n1(t_len), q(t_len), k(t_len), v(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      n1[t] = layer_norm_ref(x[t], blk.ln1_g, blk.ln1_b);
      q[t] = vec_mat(n1[t], wq);
      k[t] = vec_mat(n1[t], wk);
      v[t] = vec_mat(n1[t], wv);
    }
    Grid y1(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      Vec scores(t_len);
      for (std::size_t u = 0; u < t_len; ++u) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += q[t][i] * k[u][i];
        scores[u] = s / std::sqrt(static_cast<double>(d));
      }
      double mx = scores[0];
      for (double s : scores) mx = std::max(mx, s);
      double denom = 0.0;
      for (auto& s : scores) {
        s = std::exp(s - mx);
        denom += s;
      }
      Vec h(d, 0.0);
      for (std::size_t u = 0; u < t_len; ++u)
        for (std::size_t i = 0; i < d; ++i) h[i] += (scores[u] / denom) * v[u][i];
      const Vec proj = vec_mat(h, wo);
      y1[t] = x[t];
      for (std::size_t i = 0; i < d; ++i) y1[t][i] += proj[i];
    }
    for (std::size_t t = 0; t < t_len; ++t) {
      const Vec n2 = layer_norm_ref(y1[t], blk.ln2_g, blk.ln2_b);
      Vec ff = vec_mat(n2, w1);
      for (std::size_t i = 0; i < ff.size(); ++i) ff[i] = std::max(0.0, ff[i] + blk.b1[i]);
      const Vec back = vec_mat(ff, w2);
      x[t] = y1[t];
      for (std::size_t i = 0; i < d; ++i) x[t][i] += back[i] + blk.b2[i];
    }
  }

  Vec pooled(d, 0.0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t i = 0; i < d; ++i) pooled[i] += x[t][i];
  for (auto& p : pooled) p /= static_cast<double>(t_len);

  Vec logits(kCiuCount, 0.0);
  for (int c = 0; c < kCiuCount; ++c) {
    double acc = head.bias[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < d; ++i) acc += head.weight(c, static_cast<int>(i)) * pooled[i];
    logits[static_cast<std::size_t>(c)] = acc;
  }
  return logits;
}

}  // namespace

TEST_CASE("vocab assigns dense deterministic ids") {
  std::vector<LabeledSentence> data;
  data.push_back({{"boy", "falls"}, {}});
  data.push_back({{"apple", "boy"}, {}});
  const Vocab v = Vocab::build(data);
  REQUIRE(v.size() == 5);  // pad, oov, then sorted tokens
  REQUIRE(v.lookup("apple") == 2);
  REQUIRE(v.lookup("boy") == 3);
  REQUIRE(v.lookup("falls") == 4);
  REQUIRE(v.lookup("zebra") == Vocab::kOov);
  REQUIRE(Vocab::kPad != Vocab::kOov);
}

TEST_CASE("tokenize maps unknown tokens to OOV") {
  std::vector<LabeledSentence> data;
  data.push_back({{"water"}, {}});
  const Vocab v = Vocab::build(data);
  const std::vector<std::string> sentence = {"water", "boils"};
  REQUIRE(tokenize(sentence, v) == std::vector<int>{2, Vocab::kOov});
  REQUIRE(tokenize(std::vector<std::string>{}, v).empty());
}

TEST_CASE("forward_logits matches a from-definition oracle") {
  Rng rng(101);
  for (const int n_blocks : {0, 1, 2}) {
    const int vocab_size = 7, d = 5;
    const EncoderParams<double> enc = EncoderParams<double>::random(vocab_size, d, n_blocks, rng);
    const ClassifierHead<double> head = ClassifierHead<double>::random(d, rng, 0.0);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<int> idx;
      const int t_len = 1 + static_cast<int>(rng.below(6));
      for (int t = 0; t < t_len; ++t) idx.push_back(static_cast<int>(rng.below(vocab_size)));
      const Vec got = forward_logits<double>(idx, enc, head, RunMode::Eval, nullptr);
      const Vec want = forward_ref(idx, enc, head);
      for (int k = 0; k < kCiuCount; ++k) {
        const double rel = std::abs(got[static_cast<std::size_t>(k)] - want[static_cast<std::size_t>(k)]) /
                           std::max(1.0, std::abs(want[static_cast<std::size_t>(k)]));
        REQUIRE(rel <= 1e-6);
      }
    }
  }
}

TEST_CASE("zero parameters reduce the head to its bias") {
  EncoderParams<double> enc;
  enc.embedding = Mat<double>(4, 3);
  ClassifierHead<double> head;
  head.weight = Mat<double>(kCiuCount, 3);
  head.bias.assign(kCiuCount, 0.0);
  for (int k = 0; k < kCiuCount; ++k) head.bias[static_cast<std::size_t>(k)] = 0.25 * k;
  head.dropout = 0.0;
  const std::vector<int> idx = {0, 1, 2};
  const Vec logits = forward_logits<double>(idx, enc, head, RunMode::Eval, nullptr);
  for (int k = 0; k < kCiuCount; ++k) REQUIRE(logits[static_cast<std::size_t>(k)] == 0.25 * k);
}

TEST_CASE("forward_logits rejects empty input and missing rng") {
  EncoderParams<double> enc;
  enc.embedding = Mat<double>(4, 3);
  ClassifierHead<double> head;
  head.weight = Mat<double>(kCiuCount, 3);
  head.bias.assign(kCiuCount, 0.0);
  head.dropout = 0.5;
  REQUIRE_THROWS_AS(forward_logits<double>(std::vector<int>{}, enc, head, RunMode::Eval, nullptr),
                    EmptyInputError);
  const std::vector<int> idx = {1};
  REQUIRE_THROWS_AS(forward_logits<double>(idx, enc, head, RunMode::Train, nullptr), EmptyInputError);
}

TEST_CASE("mean pooling without attention ignores token order") {
  Rng rng(102);
  const EncoderParams<double> enc = EncoderParams<double>::random(9, 4, 0, rng);
  const ClassifierHead<double> head = ClassifierHead<double>::random(4, rng, 0.0);
  std::vector<int> idx = {3, 5, 2, 8};
  const Vec base = forward_logits<double>(idx, enc, head, RunMode::Eval, nullptr);
  std::reverse(idx.begin(), idx.end());
  const Vec rev = forward_logits<double>(idx, enc, head, RunMode::Eval, nullptr);
  for (int k = 0; k < kCiuCount; ++k)
    REQUIRE(rev[static_cast<std::size_t>(k)] == Catch::Approx(base[static_cast<std::size_t>(k)]).margin(1e-12));
}

TEST_CASE("select_and_order thresholds and sorts by descending logit") {
  Vec logits(kCiuCount, -5.0);
  logits[4] = 3.0;
  logits[9] = 1.0;
  logits[0] = 0.5;
  REQUIRE(select_and_order(logits, 0.5) == std::vector<int>{4, 9, 0});
  // Raising the threshold prunes low scorers.
  const double cut_for_two = 1.0 / (1.0 + std::exp(-0.75));
  REQUIRE(select_and_order(logits, cut_for_two) == std::vector<int>{4, 9});
}

TEST_CASE("select_and_order breaks exact ties by ascending code") {
  Vec logits(kCiuCount, -5.0);
  const double s = std::log(0.8 / 0.2);  // sigma(s) = 0.8
  logits[4] = s;
  logits[2] = s;
  REQUIRE(select_and_order(logits, 0.5) == std::vector<int>{2, 4});
}

TEST_CASE("select_and_order is invariant under increasing transforms") {
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    Vec logits(kCiuCount);
    for (auto& v : logits) v = rng.uniform(-4.0, 4.0);
    const auto base = select_and_order(logits, 0.5);
    // Any strictly increasing map that fixes the cut point preserves both
    // the selected set and the ordering. For p* = 0.5 the cut is 0.
    Vec transformed(kCiuCount);
    for (int k = 0; k < kCiuCount; ++k) {
      const double v = logits[static_cast<std::size_t>(k)];
      transformed[static_cast<std::size_t>(k)] = v * (1.0 + 0.5 * std::tanh(v) * std::tanh(v));
    }
    REQUIRE(select_and_order(transformed, 0.5) == base);
  }
}

TEST_CASE("predict returns empty output for empty sentences") {
  Rng rng(104);
  TaggerModel<double> model;
  std::vector<LabeledSentence> data;
  data.push_back({{"boy"}, {CiuId::Boy}});
  model.vocab = Vocab::build(data);
  model.encoder = EncoderParams<double>::random(model.vocab.size(), 4, 0, rng);
  model.head = ClassifierHead<double>::random(4, rng, 0.0);
  REQUIRE(predict<double>(std::vector<std::string>{}, model, TrainConfig{}).empty());
}

TEST_CASE("predict attaches sentence indices across a transcript") {
  TaggerModel<double> model;
  std::vector<LabeledSentence> data;
  data.push_back({{"boy"}, {CiuId::Boy}});
  model.vocab = Vocab::build(data);
  model.encoder.embedding = Mat<double>(model.vocab.size(), 3);
  model.head.weight = Mat<double>(kCiuCount, 3);
  model.head.bias.assign(kCiuCount, -10.0);
  model.head.bias[static_cast<std::size_t>(ciu_code(CiuId::Jar))] = 10.0;
  model.head.dropout = 0.0;
  const Transcript t = parse_chat("*PAR:\tone . two .\n");
  const CiuSequence seq = predict_transcript<double>(t, model, TrainConfig{});
  REQUIRE(seq.size() == 2);
  REQUIRE(seq[0] == CiuItem{CiuId::Jar, 0});
  REQUIRE(seq[1] == CiuItem{CiuId::Jar, 1});
}
