#include "dcc/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcc/errors.hpp"
#include "dcc/random.hpp"

namespace dcc {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
BasicParameter<T> normal_param(Shape shape, double stddev, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
  return BasicParameter<T>(std::move(t));
}

template <typename T>
BasicParameter<T> const_param(Shape shape, T value) {
  return BasicParameter<T>(BasicTensor<T>::full(std::move(shape), value));
}

template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, const BasicParameter<T>& w,
                      const BasicParameter<T>& b) {
  BasicTensor<T> y = matmul(x, w.value);
  add_row_bias(y, b.value);
  return y;
}

template <typename T>
void accumulate(BasicParameter<T>& p, const BasicTensor<T>& g) {
  auto dst = p.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void add_inplace(BasicTensor<T>& x, const BasicTensor<T>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

/// Backward through y = x·W + b: accumulates dW, db and returns dx.
template <typename T>
BasicTensor<T> affine_backward(const BasicTensor<T>& x, BasicParameter<T>& w,
                               BasicParameter<T>& b, const BasicTensor<T>& dy) {
  accumulate(w, matmul_at(x, dy));
  accumulate(b, column_sums(dy));
  return matmul_bt(dy, w.value);
}

/// Output logits with the head tied to the token embedding: y = x·Eᵀ + b.
template <typename T>
BasicTensor<T> tied_logits(const BasicTensor<T>& x, const BasicParameter<T>& emb,
                           const BasicParameter<T>& b) {
  BasicTensor<T> y = matmul_bt(x, emb.value);
  add_row_bias(y, b.value);
  return y;
}

template <typename T>
BasicTensor<T> tied_logits_backward(const BasicTensor<T>& x, BasicParameter<T>& emb,
                                    BasicParameter<T>& b, const BasicTensor<T>& dy) {
  accumulate(emb, matmul_at(dy, x));
  accumulate(b, column_sums(dy));
  return matmul(dy, emb.value);
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::size_t first, std::size_t count) {
  const std::size_t d = x.cols();
  std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(first * d),
                     x.data().begin() + static_cast<std::ptrdiff_t>((first + count) * d));
  return BasicTensor<T>({count, d}, std::move(out));
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || d_model <= 0 || d_ff <= 0 || vocab_size <= 0 ||
      max_positions <= 0) {
    throw ParameterError("model config: all sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ParameterError("model config: d_model " + std::to_string(d_model) +
                         " not divisible by n_heads " + std::to_string(n_heads));
  }
}

std::vector<HeadTap> all_heads(const ModelConfig& cfg) {
  std::vector<HeadTap> out;
  out.reserve(static_cast<std::size_t>(cfg.n_layers * cfg.n_heads));
  for (int l = 0; l < cfg.n_layers; ++l)
    for (int h = 0; h < cfg.n_heads; ++h) out.push_back({l, h});
  return out;
}

std::size_t argmax(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

template <typename T>
BasicTransformer<T>::BasicTransformer(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(cfg.seed, "model-init"));
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  // Embeddings and head start small; block weights use fan-in scaling so the
  // attention logits are not flat at initialization.
  const double std_emb = 0.02;
  const double std_in = 1.0 / std::sqrt(static_cast<double>(d));
  const double residual = 1.0 / std::sqrt(2.0 * cfg.n_layers);
  const double std_o = std_in * residual;
  const double std_fc2 = residual / std::sqrt(static_cast<double>(ff));

  tok_emb_ = normal_param<T>({v, d}, std_emb, rng);
  pos_emb_ = normal_param<T>({static_cast<std::size_t>(cfg.max_positions), d}, std_emb, rng);
  prev_emb_ = normal_param<T>({v, d}, std_emb, rng);
  layers_.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& L : layers_) {
    L.ln1_gain = const_param<T>({d}, T{1});
    L.ln1_bias = const_param<T>({d}, T{0});
    L.w_q = normal_param<T>({d, d}, std_in, rng);
    L.b_q = const_param<T>({d}, T{0});
    L.w_k = normal_param<T>({d, d}, std_in, rng);
    L.b_k = const_param<T>({d}, T{0});
    L.w_v = normal_param<T>({d, d}, std_in, rng);
    L.b_v = const_param<T>({d}, T{0});
    L.w_o = normal_param<T>({d, d}, std_o, rng);
    L.b_o = const_param<T>({d}, T{0});
    L.ln2_gain = const_param<T>({d}, T{1});
    L.ln2_bias = const_param<T>({d}, T{0});
    L.w_fc1 = normal_param<T>({d, ff}, std_in, rng);
    L.b_fc1 = const_param<T>({ff}, T{0});
    L.w_fc2 = normal_param<T>({ff, d}, std_fc2, rng);
    L.b_fc2 = const_param<T>({d}, T{0});
  }
  lnf_gain_ = const_param<T>({d}, T{1});
  lnf_bias_ = const_param<T>({d}, T{0});
  b_head_ = const_param<T>({v}, T{0});
}

template <typename T>
BasicKvCache<T> BasicTransformer<T>::make_cache() const {
  BasicKvCache<T> cache;
  cache.keys.resize(layers_.size());
  cache.values.resize(layers_.size());
  return cache;
}

template <typename T>
BasicForwardOutput<T> BasicTransformer<T>::forward(std::span<const int> tokens,
                                                   BasicKvCache<T>& cache,
                                                   std::span<const HeadTap> taps,
                                                   LogitsMode mode) const {
  if (tokens.empty()) throw ContractError("forward: new_tokens must be non-empty");
  const std::size_t n_new = tokens.size();
  const std::size_t offset = cache.cached_len;
  if (offset + n_new > static_cast<std::size_t>(cfg_.max_positions)) {
    throw CapacityError("forward: " + std::to_string(offset) + " cached + " +
                        std::to_string(n_new) + " new tokens exceed max_positions " +
                        std::to_string(cfg_.max_positions));
  }
  for (int t : tokens) {
    if (t < 0 || t >= cfg_.vocab_size) {
      throw IndexError("forward: token " + std::to_string(t) + " outside vocabulary");
    }
  }
  for (const auto& tap : taps) {
    if (tap.layer < 0 || tap.layer >= cfg_.n_layers || tap.head < 0 || tap.head >= cfg_.n_heads) {
      throw IndexError("forward: head tap (" + std::to_string(tap.layer) + "," +
                       std::to_string(tap.head) + ") out of range");
    }
  }
  if (cache.keys.size() != layers_.size()) {
    cache.keys.resize(layers_.size());
    cache.values.resize(layers_.size());
  }

  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto dh = static_cast<std::size_t>(cfg_.d_head());
  BasicTensor<T> x({n_new, d});
  for (std::size_t i = 0; i < n_new; ++i) {
    const int prev = i == 0 ? cache.last_token : tokens[i - 1];
    const auto te = tok_emb_.value.row(static_cast<std::size_t>(tokens[i]));
    const auto pe = pos_emb_.value.row(offset + i);
    const auto se = prev_emb_.value.row(static_cast<std::size_t>(prev));
    auto xr = x.row(i);
    for (std::size_t c = 0; c < d; ++c) xr[c] = te[c] + pe[c] + se[c];
  }

  BasicForwardOutput<T> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const auto ln1 = layer_norm(x, L.ln1_gain.value, L.ln1_bias.value, kLayerNormEps);
    const BasicTensor<T> q = affine(ln1.y, L.w_q, L.b_q);
    const BasicTensor<T> k_new = affine(ln1.y, L.w_k, L.b_k);
    const BasicTensor<T> v_new = affine(ln1.y, L.w_v, L.b_v);
    auto& kbuf = cache.keys[l];
    auto& vbuf = cache.values[l];
    kbuf.insert(kbuf.end(), k_new.data().begin(), k_new.data().end());
    vbuf.insert(vbuf.end(), v_new.data().begin(), v_new.data().end());
    const BasicTensor<T> k({offset + n_new, d}, kbuf);
    const BasicTensor<T> v({offset + n_new, d}, vbuf);
    const auto att = causal_attention(q, k, v, static_cast<std::size_t>(cfg_.n_heads), offset);

    for (const auto& tap : taps) {
      if (static_cast<std::size_t>(tap.layer) != l) continue;
      const auto last = att.out.row(n_new - 1);
      const auto h = static_cast<std::size_t>(tap.head);
      out.taps[tap] = std::vector<T>(last.begin() + static_cast<std::ptrdiff_t>(h * dh),
                                     last.begin() + static_cast<std::ptrdiff_t>((h + 1) * dh));
    }

    add_inplace(x, affine(att.out, L.w_o, L.b_o));
    const auto ln2 = layer_norm(x, L.ln2_gain.value, L.ln2_bias.value, kLayerNormEps);
    const BasicTensor<T> hidden = gelu(affine(ln2.y, L.w_fc1, L.b_fc1));
    add_inplace(x, affine(hidden, L.w_fc2, L.b_fc2));
  }
  cache.cached_len += n_new;
  cache.tokens_forwarded += n_new;
  cache.last_token = tokens.back();

  if (mode != LogitsMode::none) {
    const BasicTensor<T> rows = mode == LogitsMode::all ? x : gather_rows(x, n_new - 1, 1);
    const auto lnf = layer_norm(rows, lnf_gain_.value, lnf_bias_.value, kLayerNormEps);
    out.logits = tied_logits(lnf.y, tok_emb_, b_head_);
  }
  return out;
}

template <typename T>
std::vector<int> BasicTransformer<T>::generate(BasicKvCache<T>& cache,
                                               std::span<const int> prompt_tail, int max_new,
                                               int terminator) const {
  std::vector<int> produced;
  if (max_new <= 0) return produced;
  if (prompt_tail.empty()) throw ContractError("generate: prompt_tail must be non-empty");
  const std::size_t needed = cache.cached_len + prompt_tail.size() +
                             static_cast<std::size_t>(max_new) - 1;
  if (needed > static_cast<std::size_t>(cfg_.max_positions)) {
    throw CapacityError("generate: " + std::to_string(needed) + " positions exceed max_positions " +
                        std::to_string(cfg_.max_positions));
  }
  auto step = forward(prompt_tail, cache, {}, LogitsMode::last);
  while (true) {
    const auto row = step.logits.row(0);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    const int token = static_cast<int>(best);
    produced.push_back(token);
    if (token == terminator || static_cast<int>(produced.size()) >= max_new) break;
    const int next[1] = {token};
    step = forward(next, cache, {}, LogitsMode::last);
  }
  return produced;
}

template <typename T>
double BasicTransformer<T>::loss_and_grad(const TrainingSequence& seq, double grad_scale) {
  return loss_and_grad(std::span<const TrainingSequence>(&seq, 1), grad_scale);
}

template <typename T>
double BasicTransformer<T>::loss_and_grad(std::span<const TrainingSequence> batch,
                                          double grad_scale) {
  if (batch.empty()) throw ContractError("loss_and_grad: empty batch");
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto H = static_cast<std::size_t>(cfg_.n_heads);

  // Rows of every sequence are stacked so the dense layers run as one GEMM;
  // attention is applied per sequence on its row block.
  std::vector<std::size_t> row_begin;
  std::size_t total = 0;
  std::size_t loss_rows = 0;
  for (const auto& seq : batch) {
    const std::size_t n = seq.tokens.size();
    if (seq.answer_begin == 0 || seq.answer_begin >= n) {
      throw ContractError("loss_and_grad: answer_begin must lie in [1, len)");
    }
    if (n > static_cast<std::size_t>(cfg_.max_positions)) {
      throw CapacityError("loss_and_grad: sequence of " + std::to_string(n) +
                          " tokens exceeds max_positions");
    }
    row_begin.push_back(total);
    total += n;
    loss_rows += n - seq.answer_begin;
  }

  struct LayerCache {
    BasicTensor<T> x_in;
    LayerNormResult<T> ln1;
    BasicTensor<T> q, k, v;
    std::vector<AttentionResult<T>> att;  // per sequence
    BasicTensor<T> att_out;
    BasicTensor<T> x_mid;
    LayerNormResult<T> ln2;
    BasicTensor<T> pre_act, act;
  };
  std::vector<LayerCache> saved(layers_.size());

  BasicTensor<T> x({total, d});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& tokens = batch[b].tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const int prev = i == 0 ? vocab::kPad : tokens[i - 1];
      const auto te = tok_emb_.value.row(static_cast<std::size_t>(tokens[i]));
      const auto pe = pos_emb_.value.row(i);
      const auto se = prev_emb_.value.row(static_cast<std::size_t>(prev));
      auto xr = x.row(row_begin[b] + i);
      for (std::size_t c = 0; c < d; ++c) xr[c] = te[c] + pe[c] + se[c];
    }
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& L = layers_[l];
    auto& S = saved[l];
    S.x_in = x;
    S.ln1 = layer_norm(x, L.ln1_gain.value, L.ln1_bias.value, kLayerNormEps);
    S.q = affine(S.ln1.y, L.w_q, L.b_q);
    S.k = affine(S.ln1.y, L.w_k, L.b_k);
    S.v = affine(S.ln1.y, L.w_v, L.b_v);
    S.att_out = BasicTensor<T>({total, d});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t n = batch[b].tokens.size();
      auto att = causal_attention(gather_rows(S.q, row_begin[b], n),
                                  gather_rows(S.k, row_begin[b], n),
                                  gather_rows(S.v, row_begin[b], n), H, 0);
      std::copy(att.out.data().begin(), att.out.data().end(),
                S.att_out.data().begin() + static_cast<std::ptrdiff_t>(row_begin[b] * d));
      S.att.push_back(std::move(att));
    }
    add_inplace(x, affine(S.att_out, L.w_o, L.b_o));
    S.x_mid = x;
    S.ln2 = layer_norm(x, L.ln2_gain.value, L.ln2_bias.value, kLayerNormEps);
    S.pre_act = affine(S.ln2.y, L.w_fc1, L.b_fc1);
    S.act = gelu(S.pre_act);
    add_inplace(x, affine(S.act, L.w_fc2, L.b_fc2));
  }

  // Position p predicts token p+1; the loss covers answer tokens only. Each
  // sequence contributes its mean answer-token loss.
  std::vector<std::size_t> loss_row_src;
  std::vector<int> targets;
  std::vector<T> row_weight;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& seq = batch[b];
    const std::size_t count = seq.tokens.size() - seq.answer_begin;
    for (std::size_t r = 0; r < count; ++r) {
      loss_row_src.push_back(row_begin[b] + seq.answer_begin - 1 + r);
      targets.push_back(seq.tokens[seq.answer_begin + r]);
      row_weight.push_back(static_cast<T>(1.0 / static_cast<double>(count)));
    }
  }
  BasicTensor<T> sel({loss_rows, d});
  for (std::size_t r = 0; r < loss_rows; ++r) {
    const auto src = x.row(loss_row_src[r]);
    std::copy(src.begin(), src.end(), sel.row(r).begin());
  }
  const auto lnf = layer_norm(sel, lnf_gain_.value, lnf_bias_.value, kLayerNormEps);
  const BasicTensor<T> logits = tied_logits(lnf.y, tok_emb_, b_head_);

  double loss = 0;
  for (std::size_t r = 0; r < loss_rows; ++r) {
    const BasicTensor<T> one = gather_rows(logits, r, 1);
    loss += static_cast<double>(row_weight[r]) * cross_entropy(one, std::span<const int>(&targets[r], 1));
  }
  loss /= static_cast<double>(batch.size());
  if (grad_scale == 0.0) return loss;

  // cross_entropy_backward averages over its rows; rescale to per-row weights.
  BasicTensor<T> dlogits = cross_entropy_backward(logits, std::span<const int>(targets));
  const std::size_t V = logits.cols();
  for (std::size_t r = 0; r < loss_rows; ++r) {
    const T f = static_cast<T>(grad_scale) * row_weight[r] * static_cast<T>(loss_rows);
    auto row = dlogits.row(r);
    for (std::size_t c = 0; c < V; ++c) row[c] *= f;
  }
  const BasicTensor<T> dlnf_y = tied_logits_backward(lnf.y, tok_emb_, b_head_, dlogits);
  const auto lnf_g = layer_norm_backward(sel, lnf_gain_.value, lnf, dlnf_y);
  accumulate(lnf_gain_, lnf_g.dgain);
  accumulate(lnf_bias_, lnf_g.dbias);

  BasicTensor<T> dx({total, d});
  for (std::size_t r = 0; r < loss_rows; ++r) {
    const auto src = lnf_g.dx.row(r);
    auto dst = dx.row(loss_row_src[r]);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }

  for (std::size_t li = layers_.size(); li-- > 0;) {
    auto& L = layers_[li];
    auto& S = saved[li];
    // x_out = x_mid + fc2(gelu(fc1(ln2(x_mid))))
    const BasicTensor<T> dact = affine_backward(S.act, L.w_fc2, L.b_fc2, dx);
    const BasicTensor<T> dpre = gelu_backward(S.pre_act, dact);
    const BasicTensor<T> dln2y = affine_backward(S.ln2.y, L.w_fc1, L.b_fc1, dpre);
    const auto ln2g = layer_norm_backward(S.x_mid, L.ln2_gain.value, S.ln2, dln2y);
    accumulate(L.ln2_gain, ln2g.dgain);
    accumulate(L.ln2_bias, ln2g.dbias);
    add_inplace(dx, ln2g.dx);
    // x_mid = x_in + attn(ln1(x_in)) W_o + b_o
    const BasicTensor<T> datt = affine_backward(S.att_out, L.w_o, L.b_o, dx);
    BasicTensor<T> dq({total, d}), dk({total, d}), dv({total, d});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t n = batch[b].tokens.size();
      const auto ag = causal_attention_backward(
          gather_rows(S.q, row_begin[b], n), gather_rows(S.k, row_begin[b], n),
          gather_rows(S.v, row_begin[b], n), H, 0, S.att[b], gather_rows(datt, row_begin[b], n));
      const auto at = static_cast<std::ptrdiff_t>(row_begin[b] * d);
      std::copy(ag.dq.data().begin(), ag.dq.data().end(), dq.data().begin() + at);
      std::copy(ag.dk.data().begin(), ag.dk.data().end(), dk.data().begin() + at);
      std::copy(ag.dv.data().begin(), ag.dv.data().end(), dv.data().begin() + at);
    }
    BasicTensor<T> dln1y = affine_backward(S.ln1.y, L.w_q, L.b_q, dq);
    add_inplace(dln1y, affine_backward(S.ln1.y, L.w_k, L.b_k, dk));
    add_inplace(dln1y, affine_backward(S.ln1.y, L.w_v, L.b_v, dv));
    const auto ln1g = layer_norm_backward(S.x_in, L.ln1_gain.value, S.ln1, dln1y);
    accumulate(L.ln1_gain, ln1g.dgain);
    accumulate(L.ln1_bias, ln1g.dbias);
    add_inplace(dx, ln1g.dx);
  }

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& tokens = batch[b].tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto src = dx.row(row_begin[b] + i);
      const int prev = i == 0 ? vocab::kPad : tokens[i - 1];
      auto te = tok_emb_.grad.row(static_cast<std::size_t>(tokens[i]));
      auto pe = pos_emb_.grad.row(i);
      auto se = prev_emb_.grad.row(static_cast<std::size_t>(prev));
      for (std::size_t c = 0; c < d; ++c) {
        te[c] += src[c];
        pe[c] += src[c];
        se[c] += src[c];
      }
    }
  }
  return loss;
}

template <typename T>
std::vector<BasicParameter<T>*> BasicTransformer<T>::parameters() {
  std::vector<BasicParameter<T>*> ps{&tok_emb_, &pos_emb_, &prev_emb_};
  for (auto& L : layers_) {
    for (auto* p : {&L.ln1_gain, &L.ln1_bias, &L.w_q, &L.b_q, &L.w_k, &L.b_k, &L.w_v, &L.b_v,
                    &L.w_o, &L.b_o, &L.ln2_gain, &L.ln2_bias, &L.w_fc1, &L.b_fc1, &L.w_fc2,
                    &L.b_fc2}) {
      ps.push_back(p);
    }
  }
  for (auto* p : {&lnf_gain_, &lnf_bias_, &b_head_}) ps.push_back(p);
  return ps;
}

template <typename T>
std::vector<const BasicParameter<T>*> BasicTransformer<T>::parameters() const {
  auto mut = const_cast<BasicTransformer*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t BasicTransformer<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto* p : parameters()) total += p->value.size();
  return total;
}

template <typename T>
void BasicTransformer<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template class BasicTransformer<float>;
template class BasicTransformer<double>;

}  // namespace dcc
