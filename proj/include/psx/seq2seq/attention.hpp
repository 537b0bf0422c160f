#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"
#include "psx/numcore/rng.hpp"
#include "psx/seq2seq/config.hpp"
#include "psx/seq2seq/gru.hpp"

namespace psx {

/// Per-position annotations h_j = [forward_j || backward_j], each (batch x 2H).
struct EncoderOutput {
  std::vector<Var> annotations;
  std::vector<Var> forward;
  std::vector<Var> backward;
  /// Projections of the annotations used by the attention scorer, computed once per source.
  std::vector<Var> keys;
  std::size_t batch = 0;

  std::size_t length() const { return annotations.size(); }
};

struct DecoderState {
  Var s;
  Var prev_embedding;
};

struct AttentionResult {
  Var weights;  // batch x T_x
  Var context;  // batch x 2H
};

namespace detail {

template <typename T>
Tensor<T> uniform_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
  Tensor<T> t = Tensor<T>::matrix(r, c);
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-scale, scale));
  return t;
}

/// Column j of a batch of equal-length id sequences.
inline std::vector<int> column(std::span<const std::vector<int>> seqs, std::size_t j) {
  std::vector<int> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(s.at(j));
  return out;
}

inline std::size_t common_length(std::span<const std::vector<int>> seqs) {
  if (seqs.empty()) throw std::invalid_argument("empty batch");
  const std::size_t n = seqs.front().size();
  if (n == 0) throw std::invalid_argument("empty source sequence");
  for (const auto& s : seqs) {
    if (s.size() != n) throw std::invalid_argument("batch sequences differ in length");
  }
  return n;
}

}  // namespace detail

/// Parameters of the attention encoder-decoder body (everything except the output heads'
/// shortlist readout and the switch).
template <typename T>
void add_attention_params(ParamStore<T>& p, const ModelConfig& c, Rng& rng) {
  const double s = c.init_scale;
  const std::size_t h = c.hidden;
  const std::size_t e = c.embed;
  const std::size_t ctx = 2 * h;
  p.add("src.embed", detail::uniform_matrix<T>(rng, c.src_vocab, e, s));
  add_gru_params(p, "enc.fwd", e, h, rng, s);
  add_gru_params(p, "enc.bwd", e, h, rng, s);
  p.add("dec.init.W", detail::uniform_matrix<T>(rng, h, h, s));
  p.add("dec.init.b", Tensor<T>({h}));
  p.add("tgt.embed", detail::uniform_matrix<T>(rng, c.tgt_vocab, e, s));
  p.add("dec.bos", detail::uniform_matrix<T>(rng, 1, e, s));
  p.add("att.W", detail::uniform_matrix<T>(rng, h, h, s));
  p.add("att.U", detail::uniform_matrix<T>(rng, h, ctx, s));
  p.add("att.Y", detail::uniform_matrix<T>(rng, h, e, s));
  p.add("att.b", Tensor<T>({h}));
  p.add("att.v", detail::uniform_matrix<T>(rng, 1, h, s));
  add_gru_params(p, "dec.gru", e + ctx, h, rng, s);
  p.add("out.W_f", detail::uniform_matrix<T>(rng, h, h + e + ctx, s));
  p.add("out.b_f", Tensor<T>({h}));
  p.add("out.W_o", detail::uniform_matrix<T>(rng, c.shortlist, h, s));
  p.add("out.b_o", Tensor<T>({c.shortlist}));
}

/// Bidirectional GRU encoder over a batch of equal-length sources.
template <typename T>
EncoderOutput encode(Graph<T>& g, std::span<const std::vector<int>> sources) {
  const std::size_t len = detail::common_length(sources);
  const Var table = g.param("src.embed");
  const std::size_t hidden = g.value(g.param("enc.fwd.U_h")).rows();

  EncoderOutput out;
  out.batch = sources.size();
  std::vector<Var> emb;
  emb.reserve(len);
  for (std::size_t j = 0; j < len; ++j) {
    const auto ids = detail::column(sources, j);
    emb.push_back(g.lookup(table, ids));
  }
  const Var zero = g.constant(Tensor<T>::matrix(out.batch, hidden));
  out.forward.resize(len);
  out.backward.resize(len);
  Var h = zero;
  for (std::size_t j = 0; j < len; ++j) out.forward[j] = h = gru_cell(g, "enc.fwd", h, emb[j]);
  h = zero;
  for (std::size_t j = len; j-- > 0;) out.backward[j] = h = gru_cell(g, "enc.bwd", h, emb[j]);
  const Var key_w = g.param("att.U");
  for (std::size_t j = 0; j < len; ++j) {
    out.annotations.push_back(g.concat_cols({out.forward[j], out.backward[j]}));
    out.keys.push_back(g.matmul_nt(out.annotations.back(), key_w));
  }
  return out;
}

/// s_0 = tanh(W backward_1 + b), embedding of y_0 = the learned begin-of-sequence vector.
template <typename T>
DecoderState initial_state(Graph<T>& g, const EncoderOutput& enc) {
  DecoderState st;
  st.s = g.tanh(g.affine(g.param("dec.init.W"), enc.backward.front(), g.param("dec.init.b")));
  const Var bos = g.param("dec.bos");
  std::vector<int> zeros(enc.batch, 0);
  st.prev_embedding = g.lookup(bos, zeros);
  return st;
}

template <typename T>
Var embed_target(Graph<T>& g, std::span<const int> ids) {
  return g.lookup(g.param("tgt.embed"), ids);
}

/// Normalizes relevance scores (batch x T_x) and forms the context vector.
template <typename T>
AttentionResult attention_readout(Graph<T>& g, Var scores, const EncoderOutput& enc) {
  if (g.value(scores).cols() != enc.length()) throw std::invalid_argument("attention: score width != T_x");
  AttentionResult r;
  r.weights = g.softmax(scores);
  Var ctx{};
  for (std::size_t j = 0; j < enc.length(); ++j) {
    const Var term = g.scale_rows(enc.annotations[j], g.slice_cols(r.weights, j, 1));
    ctx = j == 0 ? term : g.add(ctx, term);
  }
  r.context = ctx;
  return r;
}

/// e_tj = v . tanh(W s_{t-1} + U h_j + Y emb(y_{t-1}) + b), then softmax and weighted sum.
template <typename T>
AttentionResult attend(Graph<T>& g, const DecoderState& prev, const EncoderOutput& enc) {
  if (enc.length() == 0) throw std::invalid_argument("attend: no annotations");
  const Var query = g.add(g.affine(g.param("att.W"), prev.s, g.param("att.b")),
                          g.matmul_nt(prev.prev_embedding, g.param("att.Y")));
  const Var v = g.param("att.v");
  std::vector<Var> scores;
  scores.reserve(enc.length());
  for (std::size_t j = 0; j < enc.length(); ++j) {
    scores.push_back(g.matmul_nt(g.tanh(g.add(enc.keys[j], query)), v));
  }
  return attention_readout(g, g.concat_cols(scores), enc);
}

/// s_t = GRU(s_{t-1}, [emb(y_{t-1}) || c_t]).
template <typename T>
Var decoder_step(Graph<T>& g, const DecoderState& prev, Var context) {
  return gru_cell(g, "dec.gru", prev.s, g.concat_cols({prev.prev_embedding, context}));
}

/// Shortlist logits W_o tanh(W_f [s_t || emb(y_{t-1}) || c_t] + b_f) + b_o.
template <typename T>
Var deep_output(Graph<T>& g, Var s, Var prev_embedding, Var context) {
  const Var f = g.tanh(g.affine(g.param("out.W_f"), g.concat_cols({s, prev_embedding, context}), g.param("out.b_f")));
  return g.affine(g.param("out.W_o"), f, g.param("out.b_o"));
}

}  // namespace psx
