#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace psx {

inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kBosToken = "<s>";
inline constexpr const char* kEosToken = "</s>";

/// Token <-> id map. Ids 0, 1, 2 are UNK, BOS and EOS; ids below
/// shortlist_size() form the output shortlist.
class Vocabulary {
 public:
  Vocabulary() {
    for (const char* t : {kUnkToken, kBosToken, kEosToken}) push(t);
    shortlist_ = tokens_.size();
  }

  static constexpr int unk() { return 0; }
  static constexpr int bos() { return 1; }
  static constexpr int eos() { return 2; }

  /// Builds a vocabulary from counts: tokens with count >= min_count, most
  /// frequent first, ties in byte order. `shortlist` of 0 means every kept token.
  static Vocabulary from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count,
                                std::size_t shortlist = 0) {
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : counts) {
      if (n >= min_count && !is_reserved(tok)) kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, n] : kept) v.push(tok);
    v.set_shortlist_size(shortlist == 0 ? v.size() : std::min(shortlist, v.size()));
    return v;
  }

  static bool is_reserved(const std::string& tok) { return tok == kUnkToken || tok == kBosToken || tok == kEosToken; }

  /// Appends a token if absent; returns its id.
  int add(const std::string& tok) {
    if (auto it = ids_.find(tok); it != ids_.end()) return it->second;
    const int id = push(tok);
    return id;
  }

  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
  bool closed() const { return closed_; }

  /// Id of `tok`, or UNK when absent. Throws for closed vocabularies.
  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    if (it != ids_.end()) return it->second;
    if (closed_) throw std::out_of_range("token '" + tok + "' not in closed vocabulary");
    return unk();
  }

  /// Id of `tok` when it lies in the shortlist, otherwise UNK.
  int shortlist_id(const std::string& tok) const {
    const int i = id(tok);
    return static_cast<std::size_t>(i) < shortlist_ ? i : unk();
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t shortlist_size() const { return shortlist_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void set_shortlist_size(std::size_t n) {
    const std::size_t lo = closed_ ? 1 : 3;
    if (n < lo || n > tokens_.size()) {
      throw std::invalid_argument("shortlist size " + std::to_string(n) + " must lie in [" + std::to_string(lo) + ", " +
                                  std::to_string(tokens_.size()) + "]");
    }
    shortlist_ = n;
  }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  /// One token per line; the line number is the id. The shortlist covers the whole file.
  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot write vocabulary '" + path + "'");
    for (const auto& t : tokens_) f << t << '\n';
    if (!f) throw std::ios_base::failure("write failed for vocabulary '" + path + "'");
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot open vocabulary '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return from_tokens(lines);
  }

  /// A vocabulary starting with <unk>, <s>, </s> maps unknown tokens to UNK.
  /// Any other token list is closed: every id is a plain token and lookups of
  /// unknown tokens fail.
  static Vocabulary from_tokens(const std::vector<std::string>& lines) {
    Vocabulary v;
    std::size_t first = 3;
    if (lines.size() < 3 || lines[0] != kUnkToken || lines[1] != kBosToken || lines[2] != kEosToken) {
      v.tokens_.clear();
      v.ids_.clear();
      v.closed_ = true;
      first = 0;
    }
    for (std::size_t i = first; i < lines.size(); ++i) {
      if (v.contains(lines[i])) throw std::invalid_argument("duplicate vocabulary token '" + lines[i] + "'");
      v.push(lines[i]);
    }
    v.shortlist_ = v.size();
    return v;
  }

  bool operator==(const Vocabulary& o) const {
    return tokens_ == o.tokens_ && shortlist_ == o.shortlist_ && closed_ == o.closed_;
  }

 private:
  int push(const std::string& tok) {
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
    ids_.emplace(tok, id);
    return id;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::size_t shortlist_ = 0;
  bool closed_ = false;
};

/// Whitespace tokenization.
inline std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace psx
