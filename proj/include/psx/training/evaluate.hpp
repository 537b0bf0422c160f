#pragma once

#include <algorithm>
#include <exception>
#include <map>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "psx/datasets/example.hpp"
#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"
#include "psx/pointer_head/model.hpp"

namespace psx {

struct Metrics {
  std::size_t examples = 0;
  std::size_t steps = 0;
  /// Fraction of examples whose greedy output differs from the reference anywhere.
  double error_rate = 0.0;
  /// Fraction of reference tokens reproduced at their position by greedy decoding.
  double token_accuracy = 0.0;
  /// Teacher-forced -log p(y, z | x) per target step.
  double mean_nll = 0.0;
  /// Fraction of greedy steps whose argmax lies in the location block.
  double pointer_usage = 0.0;
  /// Teacher-forced agreement of (d > 0.5) with the observed z; pointer head only.
  double switch_accuracy = 0.0;
};

/// Groups example indices by (source length, target length), preserving order inside a group.
inline std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> group_by_shape(
    std::span<const PointerExample> data, std::span<const std::size_t> indices) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t i : indices) groups[{data[i].source.size(), data[i].target.size()}].push_back(i);
  return groups;
}

/// Whether a decoded token reproduces the reference at step t. A copy is right
/// when the pointed source token equals the reference token (shared id space)
/// or, across vocabularies, when it points at the reference location.
template <typename T>
bool token_matches(const PointerSoftmaxModel<T>& model, const PointerExample& ex, std::size_t t,
                   const DecodedToken& tok) {
  if (tok.kind == DecodedToken::Kind::word) return tok.value == ex.target[t];
  if (model.config().shared_vocab) return tok.value == ex.target[t];
  return ex.steps[t].is_location() && ex.steps[t].location == tok.source_pos;
}

namespace detail {

struct EvalPartial {
  double nll = 0.0;
  std::size_t wrong = 0, correct_tokens = 0, decoded_steps = 0, copies = 0, switch_hits = 0, steps = 0;
};

template <typename T>
EvalPartial evaluate_chunk(const PointerSoftmaxModel<T>& model, const ParamStore<T>& params,
                           std::span<const PointerExample> data, std::span<const std::size_t> idx,
                           std::size_t max_len) {
  EvalPartial r;
  std::vector<const PointerExample*> batch;
  std::vector<std::vector<int>> sources;
  for (std::size_t i : idx) {
    batch.push_back(&data[i]);
    sources.push_back(data[i].source);
  }

  Graph<T> g(params);
  const ForwardResult fr = model.forward(g, batch);
  r.nll = static_cast<double>(g.scalar(fr.total_nll));
  if (model.pointer()) {
    for (std::size_t t = 0; t < fr.steps.size(); ++t) {
      const auto& d = g.value(fr.steps[t].d);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const bool says_word = d[b] > T(0.5);
        r.switch_hits += says_word == batch[b]->steps[t].is_word() ? 1 : 0;
      }
    }
  }

  const auto decoded = model.greedy_decode(params, sources, max_len);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const PointerExample& ex = *batch[b];
    const auto& out = decoded[b];
    bool ok = out.size() == ex.target.size();
    for (std::size_t t = 0; t < ex.target.size(); ++t) {
      const bool hit = t < out.size() && token_matches(model, ex, t, out[t]);
      r.correct_tokens += hit ? 1 : 0;
      ok = ok && hit;
    }
    r.wrong += ok ? 0 : 1;
    for (const auto& tok : out) r.copies += tok.kind == DecodedToken::Kind::copy ? 1 : 0;
    r.decoded_steps += out.size();
    r.steps += ex.target.size();
  }
  return r;
}

}  // namespace detail

/// Teacher-forced NLL and switch accuracy plus greedy-decoding error rates.
/// Work is split into same-shape chunks; with `threads` > 1 chunks run
/// concurrently and are reduced in chunk order, so results do not depend on
/// the thread count.
template <typename T>
Metrics evaluate(const PointerSoftmaxModel<T>& model, const ParamStore<T>& params,
                 std::span<const PointerExample> data, std::size_t chunk = 256, std::size_t threads = 1) {
  Metrics m;
  m.examples = data.size();
  if (data.empty()) return m;

  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  struct Job {
    std::vector<std::size_t> idx;
    std::size_t max_len;
  };
  std::vector<Job> jobs;
  for (const auto& [shape, idx] : group_by_shape(data, all)) {
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
      const std::size_t end = std::min(idx.size(), start + chunk);
      jobs.push_back({std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                               idx.begin() + static_cast<std::ptrdiff_t>(end)),
                      shape.second});
    }
  }

  std::vector<detail::EvalPartial> parts(jobs.size());
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t j = first; j < jobs.size(); j += stride) {
      parts[j] = detail::evaluate_chunk(model, params, data, jobs[j].idx, jobs[j].max_len);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          run(k, threads);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  detail::EvalPartial tot;
  for (const auto& p : parts) {
    tot.nll += p.nll;
    tot.wrong += p.wrong;
    tot.correct_tokens += p.correct_tokens;
    tot.decoded_steps += p.decoded_steps;
    tot.copies += p.copies;
    tot.switch_hits += p.switch_hits;
    tot.steps += p.steps;
  }
  m.steps = tot.steps;
  m.error_rate = static_cast<double>(tot.wrong) / static_cast<double>(m.examples);
  m.token_accuracy = static_cast<double>(tot.correct_tokens) / static_cast<double>(m.steps);
  m.mean_nll = tot.nll / static_cast<double>(m.steps);
  m.pointer_usage = tot.decoded_steps ? static_cast<double>(tot.copies) / static_cast<double>(tot.decoded_steps) : 0.0;
  m.switch_accuracy = model.pointer() ? static_cast<double>(tot.switch_hits) / static_cast<double>(m.steps) : 0.0;
  return m;
}

}  // namespace psx
