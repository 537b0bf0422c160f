#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psx/datasets/example.hpp"
#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"
#include "psx/numcore/rng.hpp"
#include "psx/pointer_head/step.hpp"
#include "psx/pointer_head/switch.hpp"
#include "psx/seq2seq/attention.hpp"
#include "psx/seq2seq/config.hpp"
#include "psx/seq2seq/gru.hpp"

namespace psx {

/// Graph nodes of one output step for a batch. `loc`, `d` are unset under the softmax head,
/// where `fused` is the shortlist distribution itself.
struct StepVars {
  Var logits;
  Var w;
  Var loc_scores;
  Var loc;
  Var d;
  Var fused;
};

struct ForwardResult {
  std::vector<StepVars> steps;
  Var total_nll;  // summed over every step of every example
  std::size_t step_count = 0;
};

struct DecodedToken {
  enum class Kind { word, copy };
  Kind kind = Kind::word;
  int value = -1;       // word id, or the source token id for a copy
  int source_pos = -1;  // set for copies only

  bool operator==(const DecodedToken&) const = default;
};

/// Index of the first maximum of a row.
template <typename T>
std::size_t argmax_first(std::span<const T> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

/// Encoder plus output layer: the pointer softmax or, under `Head::softmax`, the
/// plain softmax comparison arm sharing the same encoder.
template <typename T>
class PointerSoftmaxModel {
 public:
  explicit PointerSoftmaxModel(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

  const ModelConfig& config() const { return config_; }
  bool pointer() const { return config_.head == Head::pointer; }

  void init_params(ParamStore<T>& p, std::uint64_t seed) const {
    Rng rng(seed);
    const auto& c = config_;
    if (c.arch == Arch::attention) {
      add_attention_params(p, c, rng);
      if (pointer()) {
        add_switch_params(p, c.context_size() + c.hidden, c.switch_hidden, c.switch_bias_init, c.init_scale, rng);
      }
      return;
    }
    const double s = c.init_scale;
    p.add("src.embed", detail::uniform_matrix<T>(rng, c.src_vocab, c.embed, s));
    add_gru_params(p, "enc.fwd", c.embed, c.hidden, rng, s);
    p.add("out.W_f", detail::uniform_matrix<T>(rng, c.hidden, c.hidden, s));
    p.add("out.b_f", Tensor<T>({c.hidden}));
    p.add("out.W_o", detail::uniform_matrix<T>(rng, c.shortlist, c.hidden, s));
    p.add("out.b_o", Tensor<T>({c.shortlist}));
    if (pointer()) {
      p.add("ptr.U", detail::uniform_matrix<T>(rng, c.hidden, c.hidden, s));
      p.add("ptr.W", detail::uniform_matrix<T>(rng, c.hidden, c.hidden, s));
      p.add("ptr.b", Tensor<T>({c.hidden}));
      p.add("ptr.v", detail::uniform_matrix<T>(rng, 1, c.hidden, s));
      add_switch_params(p, c.shortlist + c.src_len, c.switch_hidden, c.switch_bias_init, s, rng);
    }
  }

  /// Teacher-forced forward pass over a batch of examples with equal source and
  /// target lengths; `total_nll` is the summed -log p(y, z | x).
  ForwardResult forward(Graph<T>& g, std::span<const PointerExample* const> batch) const {
    if (batch.empty()) throw std::invalid_argument("forward: empty batch");
    const std::size_t tgt_len = batch.front()->target.size();
    std::vector<std::vector<int>> sources;
    sources.reserve(batch.size());
    for (const PointerExample* ex : batch) {
      ex->validate();
      if (ex->target.size() != tgt_len) throw std::invalid_argument("forward: target lengths differ in batch");
      if (tgt_len == 0) throw std::invalid_argument("forward: empty target");
      sources.push_back(ex->source);
    }
    ForwardResult res;
    if (config_.arch == Arch::summary) {
      if (tgt_len != 1) throw std::invalid_argument("summary model predicts exactly one target token");
      res.steps.push_back(summary_step(g, sources));
    } else {
      const EncoderOutput enc = encode(g, std::span<const std::vector<int>>(sources));
      DecoderState st = initial_state(g, enc);
      for (std::size_t t = 0; t < tgt_len; ++t) {
        if (t > 0) {
          std::vector<int> prev;
          for (const PointerExample* ex : batch) prev.push_back(input_id(check_target_id(ex->target[t - 1])));
          st.prev_embedding = embed_target(g, prev);
        }
        auto [vars, next] = attention_step(g, st, enc);
        res.steps.push_back(vars);
        st.s = next;
      }
    }

    Var total{};
    for (std::size_t t = 0; t < tgt_len; ++t) {
      const StepVars& sv = res.steps[t];
      std::vector<int> flat;
      flat.reserve(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) flat.push_back(flat_label(*batch[b], t, g, sv, b));
      const Var step = g.scale(g.sum(g.log(g.pick(sv.fused, flat), static_cast<T>(kProbabilityFloor))), T(-1));
      total = t == 0 ? step : g.add(total, step);
    }
    res.total_nll = total;
    res.step_count = tgt_len * batch.size();
    return res;
  }

  /// Previous-token id fed to the decoder under teacher forcing. The softmax
  /// head only knows its shortlist, so anything outside it is fed as UNK,
  /// exactly what greedy decoding would feed back.
  int input_id(int id) const {
    if (pointer()) return id;
    return static_cast<std::size_t>(id) < config_.shortlist ? id : config_.unk_id;
  }

  /// Index into the fused (or plain shortlist) distribution observed at step t.
  int flat_label(const PointerExample& ex, std::size_t t, const Graph<T>& g, const StepVars& sv,
                 std::size_t row) const {
    const StepTarget& st = ex.steps[t];
    if (!pointer()) {
      const int id = st.is_word() ? st.word : ex.target[t];
      return id >= 0 && static_cast<std::size_t>(id) < config_.shortlist ? id : config_.unk_id;
    }
    if (st.location_pending()) {
      const auto& loc = g.value(sv.loc);
      return static_cast<int>(config_.shortlist + argmax_first<T>(loc.row(row)));
    }
    return static_cast<int>(fused_index(st, config_.shortlist, ex.source.size()));
  }

  /// Greedy decoding over a batch of equal-length sources. Each step takes the
  /// argmax of the fused vector (first index on ties); a shortlist index emits a
  /// word, a location index copies the source token there. A row stops after
  /// emitting eos_id; copies never stop a row.
  std::vector<std::vector<DecodedToken>> greedy_decode(const ParamStore<T>& params,
                                                       std::span<const std::vector<int>> sources,
                                                       std::size_t max_len) const {
    if (max_len == 0) throw std::invalid_argument("max_len must be >= 1");
    Graph<T> g(params);
    std::vector<std::vector<DecodedToken>> out(sources.size());
    std::vector<bool> done(sources.size(), false);

    auto emit = [&](const StepVars& sv) {
      const auto& fused = g.value(sv.fused);
      std::vector<int> next(sources.size(), config_.unk_id);
      for (std::size_t b = 0; b < sources.size(); ++b) {
        const std::size_t k = argmax_first<T>(fused.row(b));
        DecodedToken tok;
        if (k < config_.shortlist) {
          tok.kind = DecodedToken::Kind::word;
          tok.value = static_cast<int>(k);
          next[b] = tok.value < static_cast<int>(config_.tgt_vocab) ? tok.value : config_.unk_id;
        } else {
          tok.kind = DecodedToken::Kind::copy;
          tok.source_pos = static_cast<int>(k - config_.shortlist);
          tok.value = sources[b][tok.source_pos];
          if (config_.shared_vocab && tok.value < static_cast<int>(config_.tgt_vocab)) next[b] = tok.value;
        }
        if (!done[b]) {
          out[b].push_back(tok);
          if (tok.kind == DecodedToken::Kind::word && tok.value == config_.eos_id) done[b] = true;
        }
      }
      return next;
    };

    if (config_.arch == Arch::summary) {
      emit(summary_step(g, sources));
      return out;
    }
    const EncoderOutput enc = encode(g, sources);
    DecoderState st = initial_state(g, enc);
    for (std::size_t t = 0; t < max_len; ++t) {
      auto [vars, next_s] = attention_step(g, st, enc);
      const std::vector<int> next = emit(vars);
      if (std::all_of(done.begin(), done.end(), [](bool d) { return d; })) break;
      st.s = next_s;
      st.prev_embedding = embed_target(g, next);
    }
    return out;
  }

  /// Plain-value distributions for one example, step by step (teacher forcing).
  std::vector<StepOutput<T>> step_outputs(const ParamStore<T>& params, const PointerExample& ex) const {
    Graph<T> g(params);
    const PointerExample* one[] = {&ex};
    const ForwardResult r = forward(g, one);
    std::vector<StepOutput<T>> out;
    for (const StepVars& sv : r.steps) {
      StepOutput<T> so;
      const auto& w = g.value(sv.w);
      so.w.assign(w.values().begin(), w.values().end());
      const auto& f = g.value(sv.fused);
      so.fused.assign(f.values().begin(), f.values().end());
      if (pointer()) {
        const auto& l = g.value(sv.loc);
        so.loc.assign(l.values().begin(), l.values().end());
        so.d = g.value(sv.d)[0];
      } else {
        so.d = T(1);
      }
      out.push_back(std::move(so));
    }
    return out;
  }

  /// -log p(y, z | x) for one example.
  T sequence_nll(const ParamStore<T>& params, const PointerExample& ex) const {
    Graph<T> g(params);
    const PointerExample* one[] = {&ex};
    return g.scalar(forward(g, one).total_nll);
  }

 private:
  int check_target_id(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.tgt_vocab) {
      throw std::invalid_argument("target id " + std::to_string(id) + " outside target vocabulary");
    }
    return id;
  }

  /// Output layer shared by both architectures once logits and location scores exist.
  StepVars head(Graph<T>& g, Var logits, Var loc_scores, Var switch_input) const {
    StepVars sv;
    sv.logits = logits;
    sv.w = g.softmax(logits);
    if (!pointer()) {
      sv.fused = sv.w;
      return sv;
    }
    sv.loc_scores = loc_scores;
    sv.loc = g.softmax(loc_scores);
    sv.d = switch_prob(g, switch_input, config_.switch_activation, config_.inverse_temperature);
    sv.fused = g.concat_cols({g.scale_rows(sv.w, sv.d), g.scale_rows(sv.loc, g.one_minus(sv.d))});
    return sv;
  }

  std::pair<StepVars, Var> attention_step(Graph<T>& g, const DecoderState& st, const EncoderOutput& enc) const {
    const AttentionResult att = attend(g, st, enc);
    const Var s = decoder_step(g, st, att.context);
    const Var logits = deep_output(g, s, st.prev_embedding, att.context);

    StepVars sv;
    sv.logits = logits;
    sv.w = g.softmax(logits);
    if (!pointer()) {
      sv.fused = sv.w;
      return {sv, s};
    }
    // The location softmax is the attention distribution itself.
    sv.loc = att.weights;
    sv.d = switch_prob(g, att.context, st.s, config_.switch_activation, config_.inverse_temperature);
    sv.fused = g.concat_cols({g.scale_rows(sv.w, sv.d), g.scale_rows(sv.loc, g.one_minus(sv.d))});
    return {sv, s};
  }

  StepVars summary_step(Graph<T>& g, std::span<const std::vector<int>> sources) const {
    const std::size_t len = detail::common_length(sources);
    if (pointer() && len != config_.src_len) {
      throw std::invalid_argument("summary pointer model expects sources of length " +
                                  std::to_string(config_.src_len));
    }
    const Var table = g.param("src.embed");
    Var h = g.constant(Tensor<T>::matrix(sources.size(), config_.hidden));
    std::vector<Var> states;
    for (std::size_t j = 0; j < len; ++j) {
      const auto ids = detail::column(sources, j);
      h = gru_cell(g, "enc.fwd", h, g.lookup(table, ids));
      states.push_back(h);
    }
    const Var summary = h;
    const Var f = g.tanh(g.affine(g.param("out.W_f"), summary, g.param("out.b_f")));
    const Var logits = g.affine(g.param("out.W_o"), f, g.param("out.b_o"));
    if (!pointer()) return head(g, logits, Var{}, Var{});

    const Var query = g.affine(g.param("ptr.W"), summary, g.param("ptr.b"));
    const Var key_w = g.param("ptr.U");
    const Var v = g.param("ptr.v");
    std::vector<Var> scores;
    for (const Var& hj : states) scores.push_back(g.matmul_nt(g.tanh(g.add(g.matmul_nt(hj, key_w), query)), v));
    const Var e = g.concat_cols(scores);
    return head(g, logits, e, g.concat_cols({logits, e}));
  }

  ModelConfig config_;
};

}  // namespace psx
