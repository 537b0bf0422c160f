#pragma once

#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psx/datasets/example.hpp"
#include "psx/datasets/pointerize.hpp"
#include "psx/datasets/vocabulary.hpp"

namespace psx {

/// Malformed content in an input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json example_to_json(const PointerExample& ex) {
  std::vector<int> z, ptr;
  for (const auto& s : ex.steps) {
    z.push_back(s.z);
    ptr.push_back(s.is_location() ? s.location : -1);
  }
  return {{"source", ex.source}, {"target", ex.target}, {"z", z}, {"ptr", ptr}};
}

/// Parses one dataset record. A z = 1 step observes target[t]; a z = 0 step
/// with ptr -1 is resolved to the attention argmax during training.
inline PointerExample example_from_json(const nlohmann::json& j) {
  PointerExample ex;
  std::vector<int> z, ptr;
  try {
    ex.source = j.at("source").get<std::vector<int>>();
    ex.target = j.at("target").get<std::vector<int>>();
    z = j.at("z").get<std::vector<int>>();
    ptr = j.at("ptr").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad example record: ") + e.what());
  }
  if (z.size() != ex.target.size() || ptr.size() != ex.target.size()) {
    throw FormatError("z and ptr must have one entry per target token");
  }
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (z[t] == 1) {
      if (ptr[t] != -1) throw FormatError("word step with a pointer at step " + std::to_string(t));
      ex.steps.push_back(StepTarget::shortlist(ex.target[t]));
    } else if (z[t] == 0) {
      ex.steps.push_back(ptr[t] < 0 ? StepTarget::pointer_to_attention_argmax() : StepTarget::pointer(ptr[t]));
    } else {
      throw FormatError("z must be 0 or 1");
    }
  }
  try {
    ex.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return ex;
}

inline void write_examples(std::ostream& os, const std::vector<PointerExample>& data) {
  for (const auto& ex : data) os << example_to_json(ex).dump() << '\n';
}

inline std::vector<PointerExample> read_examples(std::istream& is) {
  std::vector<PointerExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open '" + path + "'");
  return f;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot write '" + path + "'");
  return f;
}

inline std::vector<PointerExample> load_examples(const std::string& path) {
  auto f = open_input(path);
  return read_examples(f);
}

inline void save_examples(const std::string& path, const std::vector<PointerExample>& data) {
  auto f = open_output(path);
  write_examples(f, data);
  if (!f) throw std::ios_base::failure("write failed for '" + path + "'");
}

/// Parallel text: one pair per line, source and target separated by a tab.
/// Lines without a tab are kept as pairs with an empty target so that the
/// pointerizers count them as skipped.
inline std::vector<TextPair> read_text_pairs(std::istream& is) {
  std::vector<TextPair> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    TextPair p;
    const auto tab = line.find('\t');
    p.source = split_tokens(line.substr(0, tab));
    if (tab != std::string::npos) p.target = split_tokens(line.substr(tab + 1));
    out.push_back(std::move(p));
  }
  return out;
}

/// Tagged documents, one JSON object per line with string arrays
/// "source", "source_tags", "target", "target_tags".
inline std::vector<TaggedPair> read_tagged_pairs(std::istream& is) {
  std::vector<TaggedPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TaggedPair d;
      d.source = j.at("source").get<std::vector<std::string>>();
      d.source_tags = j.at("source_tags").get<std::vector<std::string>>();
      d.target = j.at("target").get<std::vector<std::string>>();
      d.target_tags = j.at("target_tags").get<std::vector<std::string>>();
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Tab-separated "target-word<TAB>source-word" lines, one sense per line.
inline Dictionary read_dictionary(std::istream& is) {
  Dictionary dict;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw FormatError("dictionary line " + std::to_string(lineno) + " is not target<TAB>source");
    }
    dict[line.substr(0, tab)].push_back(line.substr(tab + 1));
  }
  return dict;
}

inline nlohmann::json stats_to_json(const PointerStats& s) {
  return {{"examples", s.examples},
          {"skipped", s.skipped},
          {"pointers", s.pointers},
          {"target_tokens", s.target_tokens},
          {"pointers_per_100_examples", s.pointers_per_100_examples()},
          {"pointers_per_example", s.pointers_per_example()},
          {"pointers_per_100_tokens", s.pointers_per_100_tokens()},
          {"target_coverage", s.target_coverage()},
          {"source_vocab", s.source_vocab},
          {"target_vocab", s.target_vocab}};
}

}  // namespace psx
