#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "psx/datasets/example.hpp"
#include "psx/datasets/vocabulary.hpp"

namespace psx {

/// A pre-tokenized (source, target) text pair.
struct TextPair {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

/// Per-corpus pointer statistics. Rates are single divisions of exact counts.
struct PointerStats {
  std::size_t examples = 0;
  std::size_t skipped = 0;
  std::size_t pointers = 0;
  std::size_t target_tokens = 0;
  std::size_t target_unk = 0;
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;

  double pointers_per_100_examples() const { return examples ? static_cast<double>(pointers * 100) / examples : 0.0; }
  double pointers_per_example() const { return examples ? static_cast<double>(pointers) / examples : 0.0; }
  double pointers_per_100_tokens() const {
    return target_tokens ? static_cast<double>(pointers * 100) / target_tokens : 0.0;
  }
  /// Fraction of target tokens that map to a non-UNK vocabulary id.
  double target_coverage() const {
    return target_tokens ? static_cast<double>(target_tokens - target_unk) / target_tokens : 0.0;
  }
};

struct PointerizedCorpus {
  std::vector<PointerExample> examples;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  PointerStats stats;
};

namespace detail {

inline std::optional<int> first_occurrence(const std::vector<std::string>& source, const std::string& tok) {
  for (std::size_t j = 0; j < source.size(); ++j) {
    if (source[j] == tok) return static_cast<int>(j);
  }
  return std::nullopt;
}

inline std::map<std::string, std::size_t> count_side(const std::vector<TextPair>& corpus, bool source_side) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : corpus) {
    if (p.source.empty() || p.target.empty()) continue;
    for (const auto& t : source_side ? p.source : p.target) ++counts[t];
  }
  return counts;
}

}  // namespace detail

/// Replaces every token seen fewer than `min_count` times on its own side of
/// the corpus with "<unk>". Pairs with an empty side are dropped.
inline std::vector<TextPair> apply_unk(const std::vector<TextPair>& corpus, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  const auto src = detail::count_side(corpus, true);
  const auto tgt = detail::count_side(corpus, false);
  std::vector<TextPair> out;
  for (const auto& p : corpus) {
    if (p.source.empty() || p.target.empty()) continue;
    TextPair q;
    for (const auto& t : p.source) q.source.push_back(src.at(t) >= min_count ? t : kUnkToken);
    for (const auto& t : p.target) q.target.push_back(tgt.at(t) >= min_count ? t : kUnkToken);
    out.push_back(std::move(q));
  }
  return out;
}

/// UNK pointers. Counts are taken separately per side; a token below
/// `min_count` becomes UNK on that side. A target UNK whose original word occurs
/// in the original source points at its first occurrence, even when that source
/// position was itself replaced by UNK. Other target tokens are shortlist steps.
inline PointerizedCorpus pointerize_unk(const std::vector<TextPair>& corpus, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  PointerizedCorpus out;
  out.source_vocab = Vocabulary::from_counts(detail::count_side(corpus, true), min_count);
  out.target_vocab = Vocabulary::from_counts(detail::count_side(corpus, false), min_count);
  auto& st = out.stats;
  for (const auto& p : corpus) {
    if (p.source.empty() || p.target.empty()) {
      ++st.skipped;
      continue;
    }
    PointerExample ex;
    ex.source = out.source_vocab.encode(p.source);
    for (const auto& tok : p.target) {
      const int id = out.target_vocab.id(tok);
      ex.target.push_back(id);
      ++st.target_tokens;
      if (id != Vocabulary::unk()) {
        ex.steps.push_back(StepTarget::shortlist(id));
        continue;
      }
      ++st.target_unk;
      const auto loc = Vocabulary::is_reserved(tok) ? std::nullopt : detail::first_occurrence(p.source, tok);
      if (loc) {
        ex.steps.push_back(StepTarget::pointer(*loc));
        ++st.pointers;
      } else {
        ex.steps.push_back(StepTarget::shortlist(Vocabulary::unk()));
      }
    }
    out.examples.push_back(std::move(ex));
    ++st.examples;
  }
  st.source_vocab = out.source_vocab.size();
  st.target_vocab = out.target_vocab.size();
  return out;
}

/// A document with one entity tag per token; "O" marks a non-entity token.
struct TaggedPair {
  std::vector<std::string> source;
  std::vector<std::string> source_tags;
  std::vector<std::string> target;
  std::vector<std::string> target_tags;
};

inline std::string entity_placeholder(int id) { return "@ent" + std::to_string(id); }

/// Replaces entity tokens by per-document integer ids: numbering restarts at 1
/// for each document, runs left to right over the source and then the target,
/// and repeated entity tokens share an id.
inline TextPair anonymize_entities(const TaggedPair& doc) {
  if (doc.source.size() != doc.source_tags.size() || doc.target.size() != doc.target_tags.size()) {
    throw std::invalid_argument("entity tags must align with tokens (source " + std::to_string(doc.source.size()) +
                                "/" + std::to_string(doc.source_tags.size()) + ", target " +
                                std::to_string(doc.target.size()) + "/" + std::to_string(doc.target_tags.size()) +
                                ")");
  }
  std::unordered_map<std::string, int> ids;
  auto anon = [&](const std::vector<std::string>& toks, const std::vector<std::string>& tags) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (tags[i] == "O") {
        out.push_back(toks[i]);
      } else {
        auto [it, inserted] = ids.try_emplace(toks[i], static_cast<int>(ids.size()) + 1);
        out.push_back(entity_placeholder(it->second));
      }
    }
    return out;
  };
  TextPair p;
  p.source = anon(doc.source, doc.source_tags);
  p.target = anon(doc.target, doc.target_tags);
  return p;
}

/// Entity pointers. Target entity placeholders that also occur in the source
/// point at the first occurrence; everything else is a shortlist step. Every
/// placeholder gets its own vocabulary entry shared across documents, so the
/// placeholders stay in the vocabulary regardless of `min_count`.
inline PointerizedCorpus pointerize_entities(const std::vector<TaggedPair>& corpus, std::size_t min_count = 1) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::vector<TextPair> anon;
  anon.reserve(corpus.size());
  for (const auto& d : corpus) anon.push_back(anonymize_entities(d));

  auto is_placeholder = [](const std::string& t) { return t.rfind("@ent", 0) == 0; };
  auto build = [&](bool source_side) {
    auto counts = detail::count_side(anon, source_side);
    std::map<std::string, std::size_t> words;
    int max_id = 0;
    for (const auto& [tok, n] : counts) {
      if (is_placeholder(tok)) {
        max_id = std::max(max_id, std::stoi(tok.substr(4)));
      } else {
        words.emplace(tok, n);
      }
    }
    Vocabulary v;
    for (int i = 1; i <= max_id; ++i) v.add(entity_placeholder(i));
    const Vocabulary plain = Vocabulary::from_counts(words, min_count);
    for (const auto& t : plain.tokens()) v.add(t);
    v.set_shortlist_size(v.size());
    return v;
  };

  PointerizedCorpus out;
  out.source_vocab = build(true);
  out.target_vocab = build(false);
  auto& st = out.stats;
  for (const auto& p : anon) {
    if (p.source.empty() || p.target.empty()) {
      ++st.skipped;
      continue;
    }
    PointerExample ex;
    ex.source = out.source_vocab.encode(p.source);
    for (const auto& tok : p.target) {
      const int id = out.target_vocab.id(tok);
      ex.target.push_back(id);
      ++st.target_tokens;
      st.target_unk += id == Vocabulary::unk() ? 1 : 0;
      const auto loc = is_placeholder(tok) ? detail::first_occurrence(p.source, tok) : std::nullopt;
      if (loc) {
        ex.steps.push_back(StepTarget::pointer(*loc));
        ++st.pointers;
      } else {
        ex.steps.push_back(StepTarget::shortlist(id));
      }
    }
    out.examples.push_back(std::move(ex));
    ++st.examples;
  }
  st.source_vocab = out.source_vocab.size();
  st.target_vocab = out.target_vocab.size();
  return out;
}

/// Target word -> candidate source words, in file order.
using Dictionary = std::map<std::string, std::vector<std::string>>;

/// Supervision for one MT target word: the shortlist id when in the shortlist;
/// else the first verbatim occurrence in the source; else the first occurrence
/// of the first dictionary sense found in the source; else a pointer resolved
/// to the attention argmax at training time.
inline StepTarget mt_pointer_heuristic(const std::string& target_word, const std::vector<std::string>& source,
                                       const Vocabulary& shortlist, const Dictionary& dictionary) {
  if (source.empty()) throw std::invalid_argument("mt heuristic: empty source sentence");
  const int id = shortlist.shortlist_id(target_word);
  if (id != Vocabulary::unk() || target_word == kUnkToken) return StepTarget::shortlist(id);
  if (auto loc = detail::first_occurrence(source, target_word)) return StepTarget::pointer(*loc);
  if (auto it = dictionary.find(target_word); it != dictionary.end()) {
    for (const auto& sense : it->second) {
      if (auto loc = detail::first_occurrence(source, sense)) return StepTarget::pointer(*loc);
    }
  }
  return StepTarget::pointer_to_attention_argmax();
}

/// Applies the MT heuristic to a parallel corpus. The target shortlist keeps
/// tokens seen at least `min_count` times, capped at `shortlist` entries
/// (0 = no cap).
inline PointerizedCorpus pointerize_mt(const std::vector<TextPair>& corpus, const Dictionary& dictionary,
                                       std::size_t min_count, std::size_t shortlist = 0) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  PointerizedCorpus out;
  out.source_vocab = Vocabulary::from_counts(detail::count_side(corpus, true), min_count);
  out.target_vocab = Vocabulary::from_counts(detail::count_side(corpus, false), min_count, shortlist);
  auto& st = out.stats;
  for (const auto& p : corpus) {
    if (p.source.empty() || p.target.empty()) {
      ++st.skipped;
      continue;
    }
    PointerExample ex;
    ex.source = out.source_vocab.encode(p.source);
    for (const auto& tok : p.target) {
      const StepTarget step = mt_pointer_heuristic(tok, p.source, out.target_vocab, dictionary);
      const int id = out.target_vocab.shortlist_id(tok);
      ex.target.push_back(id);
      ex.steps.push_back(step);
      ++st.target_tokens;
      st.target_unk += id == Vocabulary::unk() ? 1 : 0;
      st.pointers += step.is_location() ? 1 : 0;
    }
    out.examples.push_back(std::move(ex));
    ++st.examples;
  }
  st.source_vocab = out.source_vocab.size();
  st.target_vocab = out.target_vocab.shortlist_size();
  return out;
}

}  // namespace psx
