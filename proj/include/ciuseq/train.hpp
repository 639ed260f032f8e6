#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ciuseq/loss.hpp"
#include "ciuseq/model.hpp"

namespace ciuseq {

// Named view of every parameter tensor; single source of truth for the
// optimizer parameter groups, checkpoint layout and gradient checks.
template <typename S>
struct TensorRef {
  std::string name;
  std::vector<S>* data;
  std::vector<std::uint32_t> shape;
  bool weight_decay;   // matrices decay; biases and layer-norm params do not
  bool encoder_group;  // selects lr_encoder vs lr_head
};

template <typename S>
std::vector<TensorRef<S>> tensor_table(EncoderParams<S>& enc, ClassifierHead<S>& head) {
  std::vector<TensorRef<S>> refs;
  const auto u32 = [](int v) { return static_cast<std::uint32_t>(v); };
  refs.push_back({"embedding", &enc.embedding.a, {u32(enc.embedding.rows), u32(enc.embedding.cols)}, true, true});
  for (std::size_t b = 0; b < enc.blocks.size(); ++b) {
    auto& blk = enc.blocks[b];
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    const auto mat = [&](const char* n, Mat<S>& m, bool decay) {
      refs.push_back({prefix + n, &m.a, {u32(m.rows), u32(m.cols)}, decay, true});
    };
    const auto vec = [&](const char* n, std::vector<S>& v) {
      refs.push_back({prefix + n, &v, {u32(static_cast<int>(v.size()))}, false, true});
    };
    mat("wq", blk.wq, true);
    mat("wk", blk.wk, true);
    mat("wv", blk.wv, true);
    mat("wo", blk.wo, true);
    mat("w1", blk.w1, true);
    mat("w2", blk.w2, true);
    vec("b1", blk.b1);
    vec("b2", blk.b2);
    vec("ln1_g", blk.ln1_g);
    vec("ln1_b", blk.ln1_b);
    vec("ln2_g", blk.ln2_g);
    vec("ln2_b", blk.ln2_b);
  }
  refs.push_back({"head.weight", &head.weight.a, {u32(head.weight.rows), u32(head.weight.cols)}, true, false});
  refs.push_back({"head.bias", &head.bias, {u32(static_cast<int>(head.bias.size()))}, false, false});
  return refs;
}

namespace detail {

template <typename S>
void layer_norm_backward(const Mat<S>& d_out, const Mat<S>& xhat, const std::vector<S>& inv_std,
                         const std::vector<S>& gain, Mat<S>& d_x_accum, std::vector<S>& d_gain,
                         std::vector<S>& d_bias) {
  const int t_len = d_out.rows, d = d_out.cols;
  std::vector<S> dxhat(static_cast<std::size_t>(d));
  for (int t = 0; t < t_len; ++t) {
    S m1{0}, m2{0};
    for (int i = 0; i < d; ++i) {
      const S dy = d_out(t, i);
      d_gain[static_cast<std::size_t>(i)] += dy * xhat(t, i);
      d_bias[static_cast<std::size_t>(i)] += dy;
      dxhat[static_cast<std::size_t>(i)] = dy * gain[static_cast<std::size_t>(i)];
      m1 += dxhat[static_cast<std::size_t>(i)];
      m2 += dxhat[static_cast<std::size_t>(i)] * xhat(t, i);
    }
    m1 /= static_cast<S>(d);
    m2 /= static_cast<S>(d);
    const S istd = inv_std[static_cast<std::size_t>(t)];
    for (int i = 0; i < d; ++i)
      d_x_accum(t, i) += istd * (dxhat[static_cast<std::size_t>(i)] - m1 - xhat(t, i) * m2);
  }
}

// dW(i,j) += sum_t in[t][i] * d_out[t][j]   (for y_row = x_row * W layers)
template <typename S>
void accumulate_weight_grad(const Mat<S>& input, const Mat<S>& d_out, Mat<S>& d_w) {
  for (int t = 0; t < input.rows; ++t) {
    const S* in_row = input.row(t);
    const S* do_row = d_out.row(t);
    for (int i = 0; i < d_w.rows; ++i) {
      const S xi = in_row[i];
      if (xi == S{0}) continue;
      S* w_row = d_w.row(i);
      for (int j = 0; j < d_w.cols; ++j) w_row[j] += xi * do_row[j];
    }
  }
}

template <typename S>
Mat<S> block_backward(const AttentionBlock<S>& blk, const BlockCache<S>& cache, const Mat<S>& d_out,
                      AttentionBlock<S>& grad) {
  const int t_len = d_out.rows, d = d_out.cols;
  const int hidden = blk.w1.cols;

  // Feed-forward path; d_out is both the residual and the FF output grad.
  Mat<S> d_y1 = d_out;
  Mat<S> d_ff_act(t_len, hidden);
  for (int t = 0; t < t_len; ++t) {
    const S* do_row = d_out.row(t);
    for (int j = 0; j < d; ++j) grad.b2[static_cast<std::size_t>(j)] += do_row[j];
    matvec_add(blk.w2, do_row, d_ff_act.row(t));
  }
  accumulate_weight_grad(cache.ff_act, d_out, grad.w2);

  Mat<S> d_ff_pre = d_ff_act;
  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < hidden; ++i)
      if (cache.ff_pre(t, i) <= S{0}) d_ff_pre(t, i) = S{0};

  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < hidden; ++i) grad.b1[static_cast<std::size_t>(i)] += d_ff_pre(t, i);
  accumulate_weight_grad(cache.n2, d_ff_pre, grad.w1);

  Mat<S> d_n2(t_len, d);
  for (int t = 0; t < t_len; ++t) matvec_add(blk.w1, d_ff_pre.row(t), d_n2.row(t));
  layer_norm_backward(d_n2, cache.n2hat, cache.ln2_inv_std, blk.ln2_g, d_y1, grad.ln2_g, grad.ln2_b);

  // Attention path; d_y1 is both the residual and the attention output grad.
  Mat<S> d_x = d_y1;
  Mat<S> d_h(t_len, d);
  for (int t = 0; t < t_len; ++t) matvec_add(blk.wo, d_y1.row(t), d_h.row(t));
  accumulate_weight_grad(cache.h, d_y1, grad.wo);

  Mat<S> d_attn(t_len, t_len);
  Mat<S> d_v(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    const S* dh_row = d_h.row(t);
    for (int u = 0; u < t_len; ++u) {
      S acc{0};
      const S* v_row = cache.v.row(u);
      for (int i = 0; i < d; ++i) acc += dh_row[i] * v_row[i];
      d_attn(t, u) = acc;
      const S w = cache.attn(t, u);
      S* dv_row = d_v.row(u);
      for (int i = 0; i < d; ++i) dv_row[i] += w * dh_row[i];
    }
  }

  // Softmax rows.
  Mat<S> d_scores(t_len, t_len);
  for (int t = 0; t < t_len; ++t) {
    S dot{0};
    for (int u = 0; u < t_len; ++u) dot += d_attn(t, u) * cache.attn(t, u);
    for (int u = 0; u < t_len; ++u) d_scores(t, u) = cache.attn(t, u) * (d_attn(t, u) - dot);
  }

  const S inv_sqrt_d = S{1} / std::sqrt(static_cast<S>(d));
  Mat<S> d_q(t_len, d);
  Mat<S> d_k(t_len, d);
  for (int t = 0; t < t_len; ++t)
    for (int u = 0; u < t_len; ++u) {
      const S ds = d_scores(t, u) * inv_sqrt_d;
      if (ds == S{0}) continue;
      S* dq_row = d_q.row(t);
      S* dk_row = d_k.row(u);
      const S* k_row = cache.k.row(u);
      const S* q_row = cache.q.row(t);
      for (int i = 0; i < d; ++i) {
        dq_row[i] += ds * k_row[i];
        dk_row[i] += ds * q_row[i];
      }
    }

  Mat<S> d_n1(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    matvec_add(blk.wq, d_q.row(t), d_n1.row(t));
    matvec_add(blk.wk, d_k.row(t), d_n1.row(t));
    matvec_add(blk.wv, d_v.row(t), d_n1.row(t));
  }
  accumulate_weight_grad(cache.n1, d_q, grad.wq);
  accumulate_weight_grad(cache.n1, d_k, grad.wk);
  accumulate_weight_grad(cache.n1, d_v, grad.wv);

  layer_norm_backward(d_n1, cache.n1hat, cache.ln1_inv_std, blk.ln1_g, d_x, grad.ln1_g, grad.ln1_b);
  return d_x;
}

}  // namespace detail

// Backprop from d(loss)/d(logits) into parameter gradient accumulators.
template <typename S>
void backward_logits(std::span<const double> d_logits, const EncoderParams<S>& enc,
                     const ClassifierHead<S>& head, const ForwardCache<S>& cache,
                     EncoderParams<S>& enc_grad, ClassifierHead<S>& head_grad) {
  const int d = enc.dim();
  const int t_len = static_cast<int>(cache.indices.size());

  std::vector<S> g(kCiuCount);
  for (int k = 0; k < kCiuCount; ++k) g[static_cast<std::size_t>(k)] = static_cast<S>(d_logits[static_cast<std::size_t>(k)]);

  std::vector<S> d_pooled_dropped(static_cast<std::size_t>(d), S{0});
  for (int k = 0; k < kCiuCount; ++k) {
    const S gk = g[static_cast<std::size_t>(k)];
    head_grad.bias[static_cast<std::size_t>(k)] += gk;
    S* w_grad_row = head_grad.weight.row(k);
    const S* w_row = head.weight.row(k);
    for (int i = 0; i < d; ++i) {
      w_grad_row[i] += gk * cache.pooled_dropped[static_cast<std::size_t>(i)];
      d_pooled_dropped[static_cast<std::size_t>(i)] += w_row[i] * gk;
    }
  }

  std::vector<S> d_pooled = d_pooled_dropped;
  if (!cache.dropout_scale.empty())
    for (int i = 0; i < d; ++i) d_pooled[static_cast<std::size_t>(i)] *= cache.dropout_scale[static_cast<std::size_t>(i)];

  Mat<S> d_x(t_len, d);
  const S inv_t = S{1} / static_cast<S>(t_len);
  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < d; ++i) d_x(t, i) = d_pooled[static_cast<std::size_t>(i)] * inv_t;

  for (std::size_t b = enc.blocks.size(); b-- > 0;)
    d_x = detail::block_backward(enc.blocks[b], cache.blocks[b], d_x, enc_grad.blocks[b]);

  for (int t = 0; t < t_len; ++t) {
    S* dst = enc_grad.embedding.row(cache.indices[static_cast<std::size_t>(t)]);
    const S* src = d_x.row(t);
    for (int i = 0; i < d; ++i) dst[i] += src[i];
  }
}

struct TrainLog {
  std::vector<double> epoch_mean_loss;
};

namespace detail {

// Decoupled-weight-decay adaptive moment step on one tensor.
template <typename S>
void adamw_step(std::vector<S>& param, const std::vector<S>& grad, std::vector<S>& m, std::vector<S>& v,
                double lr, double weight_decay, const TrainConfig& cfg, long long step) {
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double gi = static_cast<double>(grad[i]);
    const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
    const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
    m[i] = static_cast<S>(mi);
    v[i] = static_cast<S>(vi);
    const double mhat = mi / corr1;
    const double vhat = vi / corr2;
    const double update = mhat / (std::sqrt(vhat) + cfg.adam_eps) + weight_decay * static_cast<double>(param[i]);
    param[i] = static_cast<S>(static_cast<double>(param[i]) - lr * update);
  }
}

}  // namespace detail

// Mini-batch gradient descent on the combined loss. Single-threaded and
// fully deterministic given (dataset, config): identical runs produce
// bit-identical parameters.
template <typename S = float>
std::pair<TaggerModel<S>, TrainLog> train(const std::vector<LabeledSentence>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDatasetError("train: empty dataset");

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!dataset[i].tokens.empty()) usable.push_back(i);
  if (usable.empty()) throw EmptyDatasetError("train: every sentence is empty");

  TaggerModel<S> model;
  model.vocab = Vocab::build(dataset);

  Rng root(cfg.seed);
  Rng init_rng = root.derive(1);
  Rng order_rng = root.derive(2);
  Rng dropout_rng = root.derive(3);

  model.encoder = EncoderParams<S>::random(model.vocab.size(), cfg.embed_dim, cfg.attn_blocks, init_rng);
  model.head = ClassifierHead<S>::random(cfg.embed_dim, init_rng, cfg.dropout);

  std::vector<std::vector<int>> indices(dataset.size());
  std::vector<std::vector<double>> targets(dataset.size());
  for (std::size_t i : usable) {
    indices[i] = tokenize(dataset[i].tokens, model.vocab);
    targets[i] = multi_hot(dataset[i].labels);
  }

  EncoderParams<S> enc_grad = EncoderParams<S>::zeros_like(model.encoder);
  ClassifierHead<S> head_grad = ClassifierHead<S>::zeros_like(model.head);
  EncoderParams<S> enc_m = EncoderParams<S>::zeros_like(model.encoder);
  EncoderParams<S> enc_v = EncoderParams<S>::zeros_like(model.encoder);
  ClassifierHead<S> head_m = ClassifierHead<S>::zeros_like(model.head);
  ClassifierHead<S> head_v = ClassifierHead<S>::zeros_like(model.head);

  auto params = tensor_table(model.encoder, model.head);
  auto grads = tensor_table(enc_grad, head_grad);
  auto moms = tensor_table(enc_m, head_m);
  auto vels = tensor_table(enc_v, head_v);

  TrainLog log;
  long long step = 0;
  ForwardCache<S> cache;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(usable);
    double epoch_loss = 0.0;
    std::size_t epoch_sentences = 0;

    for (std::size_t start = 0; start < usable.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(usable.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double batch_n = static_cast<double>(end - start);

      for (auto& ref : grads) std::fill(ref.data->begin(), ref.data->end(), S{0});

      double batch_loss = 0.0;
      std::vector<double> d_logits(kCiuCount);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = usable[b];
        const auto logits =
            forward_logits<S>(indices[i], model.encoder, model.head, RunMode::Train, &dropout_rng, &cache);
        batch_loss += total_loss(logits, targets[i], dataset[i].labels, cfg.margin, cfg.lambda);
        std::fill(d_logits.begin(), d_logits.end(), 0.0);
        total_loss_grad(logits, targets[i], dataset[i].labels, cfg.margin, cfg.lambda, d_logits);
        for (auto& v : d_logits) v /= batch_n;
        backward_logits<S>(d_logits, model.encoder, model.head, cache, enc_grad, head_grad);
      }
      batch_loss /= batch_n;
      if (!std::isfinite(batch_loss))
        throw NonFiniteLossError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(start / static_cast<std::size_t>(cfg.batch_size)));

      ++step;
      for (std::size_t r = 0; r < params.size(); ++r) {
        const double lr = params[r].encoder_group ? cfg.lr_encoder : cfg.lr_head;
        const double wd = params[r].weight_decay ? cfg.weight_decay : 0.0;
        detail::adamw_step(*params[r].data, *grads[r].data, *moms[r].data, *vels[r].data, lr, wd, cfg, step);
      }

      epoch_loss += batch_loss * batch_n;
      epoch_sentences += end - start;
    }
    log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_sentences));
  }
  return {std::move(model), std::move(log)};
}

// --- gradient verification -------------------------------------------------

namespace detail {

template <typename S>
double loss_at(const std::vector<int>& indices, const std::vector<double>& targets,
               const std::vector<CiuId>& order, const EncoderParams<S>& enc, const ClassifierHead<S>& head,
               const TrainConfig& cfg) {
  const auto logits = forward_logits<S>(indices, enc, head, RunMode::Eval, nullptr);
  return total_loss(logits, targets, order, cfg.margin, cfg.lambda);
}

}  // namespace detail

// True when some ground-truth pair sits within `tol` of the hinge kink, i.e.
// where max(0, s_j - s_i + m) is not differentiable.
inline bool near_rank_kink(std::span<const double> logits, std::span<const CiuId> gt_order, double margin,
                           double tol) {
  for (std::size_t i = 0; i + 1 < gt_order.size(); ++i)
    for (std::size_t j = i + 1; j < gt_order.size(); ++j) {
      const double hinge = logits[static_cast<std::size_t>(ciu_code(gt_order[j]))] -
                           logits[static_cast<std::size_t>(ciu_code(gt_order[i]))] + margin;
      if (std::abs(hinge) < tol) return true;
    }
  return false;
}

// Compares analytic gradients of the combined loss against central finite
// differences (step 1e-5) over every parameter; returns the max relative
// error. Dropout is off (eval-mode path) so the objective is smooth except
// at hinge/ReLU kinks, which callers exclude by construction.
inline double grad_check(TaggerModel<double>& model, const LabeledSentence& sample, const TrainConfig& cfg) {
  const std::vector<int> indices = tokenize(sample.tokens, model.vocab);
  const std::vector<double> targets = multi_hot(sample.labels);

  ForwardCache<double> cache;
  const auto logits = forward_logits<double>(indices, model.encoder, model.head, RunMode::Eval, nullptr, &cache);
  std::vector<double> d_logits(kCiuCount, 0.0);
  total_loss_grad(logits, targets, sample.labels, cfg.margin, cfg.lambda, d_logits);

  EncoderParams<double> enc_grad = EncoderParams<double>::zeros_like(model.encoder);
  ClassifierHead<double> head_grad = ClassifierHead<double>::zeros_like(model.head);
  backward_logits<double>(d_logits, model.encoder, model.head, cache, enc_grad, head_grad);

  auto params = tensor_table(model.encoder, model.head);
  auto grads = tensor_table(enc_grad, head_grad);

  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t r = 0; r < params.size(); ++r) {
    auto& p = *params[r].data;
    const auto& g = *grads[r].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double original = p[i];
      p[i] = original + h;
      const double up = detail::loss_at(indices, targets, sample.labels, model.encoder, model.head, cfg);
      p[i] = original - h;
      const double down = detail::loss_at(indices, targets, sample.labels, model.encoder, model.head, cfg);
      p[i] = original;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// Random small instance (d <= 8, V <= 50, one attention block), re-sampled
// until it sits away from hinge and ReLU kinks so the finite-difference
// comparison is valid.
inline double grad_check_random(std::uint64_t seed, double lambda = 0.1) {
  Rng rng(Rng::mix(seed));
  for (int attempt = 0; attempt < 64; ++attempt) {
    const int vocab_size = rng.uniform_int(10, 50);
    const int d = rng.uniform_int(2, 8);
    const int t_len = rng.uniform_int(2, 6);

    TaggerModel<double> model;
    for (int i = 0; i < vocab_size - 2; ++i) model.vocab.add("w" + std::to_string(i));
    model.encoder = EncoderParams<double>::random(model.vocab.size(), d, 1, rng);
    model.head = ClassifierHead<double>::random(d, rng, 0.0);

    LabeledSentence sample;
    for (int t = 0; t < t_len; ++t)
      sample.tokens.push_back("w" + std::to_string(rng.uniform_int(0, vocab_size - 3)));
    const int n_labels = rng.uniform_int(2, 4);
    std::vector<int> codes(kCiuCount);
    for (int i = 0; i < kCiuCount; ++i) codes[static_cast<std::size_t>(i)] = i;
    rng.shuffle(codes);
    for (int i = 0; i < n_labels; ++i) sample.labels.push_back(static_cast<CiuId>(codes[static_cast<std::size_t>(i)]));

    TrainConfig cfg;
    cfg.lambda = lambda;
    cfg.margin = 1.0;
    cfg.dropout = 0.0;
    cfg.embed_dim = d;
    cfg.attn_blocks = 1;

    const std::vector<int> indices = tokenize(sample.tokens, model.vocab);
    ForwardCache<double> cache;
    const auto logits = forward_logits<double>(indices, model.encoder, model.head, RunMode::Eval, nullptr, &cache);
    if (near_rank_kink(logits, sample.labels, cfg.margin, 1e-3)) continue;
    bool near_relu_kink = false;
    for (const auto& blk : cache.blocks)
      for (const double pre : blk.ff_pre.a)
        if (std::abs(pre) < 1e-3) near_relu_kink = true;
    if (near_relu_kink) continue;

    return grad_check(model, sample, cfg);
  }
  throw Error("grad_check_random: could not sample a kink-free instance");
}

}  // namespace ciuseq
