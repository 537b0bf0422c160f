#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "psx/datasets/example.hpp"
#include "psx/numcore/rng.hpp"

namespace psx {

struct SyntheticConfig {
  std::size_t vocab_size = 600;
  std::size_t seq_len = 7;
  std::size_t rare_cutoff = 60;
  std::size_t shortlist_size = 540;
  double geometric_ratio = 0.99;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size == 0 || seq_len == 0) throw std::invalid_argument("synthetic: sizes must be positive");
    if (seq_len > vocab_size) {
      throw std::invalid_argument("synthetic: seq_len " + std::to_string(seq_len) + " exceeds vocab_size " +
                                  std::to_string(vocab_size) + " (tokens are drawn without replacement)");
    }
    if (shortlist_size + rare_cutoff != vocab_size) {
      throw std::invalid_argument("synthetic: shortlist_size + rare_cutoff must equal vocab_size");
    }
    if (!(geometric_ratio > 0.0 && geometric_ratio < 1.0)) {
      throw std::invalid_argument("synthetic: geometric_ratio must lie in (0, 1)");
    }
  }

  /// Probability that a single unconstrained draw yields `rank`.
  double first_draw_mass(std::size_t rank) const {
    const double r = geometric_ratio;
    return (1.0 - r) * std::pow(r, static_cast<double>(rank)) /
           (1.0 - std::pow(r, static_cast<double>(vocab_size)));
  }
};

/// Rarest-word detection stream. Token id == unigram rank, so rank 0 is the most
/// frequent word. Each sequence holds `seq_len` distinct ranks drawn with
/// probability proportional to ratio^rank among the ranks not yet drawn; the
/// target is the drawn rank of greatest value. Ranks from `shortlist_size` on are
/// labelled as pointers to their source position.
class RarestWordGenerator {
 public:
  explicit RarestWordGenerator(SyntheticConfig config) : config_(config), rng_(config.seed) {
    config_.validate();
    log_ratio_ = std::log(config_.geometric_ratio);
    tail_ = 1.0 - std::pow(config_.geometric_ratio, static_cast<double>(config_.vocab_size));
  }

  const SyntheticConfig& config() const { return config_; }

  /// One draw from the truncated geometric law over all ranks.
  std::size_t draw_rank() {
    const double u = rng_.uniform();
    const double x = std::log1p(-u * tail_) / log_ratio_;
    const auto rank = static_cast<std::size_t>(x);
    return std::min(rank, config_.vocab_size - 1);
  }

  PointerExample next() {
    PointerExample ex;
    ex.source.reserve(config_.seq_len);
    // Rejecting repeats of the full law is the same as renormalizing over the
    // ranks still available.
    while (ex.source.size() < config_.seq_len) {
      const int rank = static_cast<int>(draw_rank());
      if (std::find(ex.source.begin(), ex.source.end(), rank) == ex.source.end()) ex.source.push_back(rank);
    }
    const auto it = std::max_element(ex.source.begin(), ex.source.end());
    const int target = *it;
    ex.target = {target};
    if (static_cast<std::size_t>(target) >= config_.shortlist_size) {
      ex.steps = {StepTarget::pointer(static_cast<int>(it - ex.source.begin()))};
    } else {
      ex.steps = {StepTarget::shortlist(target)};
    }
    return ex;
  }

  std::vector<PointerExample> take(std::size_t n) {
    std::vector<PointerExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

 private:
  SyntheticConfig config_;
  Rng rng_;
  double log_ratio_ = 0.0;
  double tail_ = 1.0;
};

/// Reserved ids shared by the copy task and corpus vocabularies.
inline constexpr int kUnkId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kReservedIds = 3;

struct CopyTaskConfig {
  std::size_t vocab_size = 200;
  std::size_t shortlist = 150;
  std::size_t seq_len = 10;
  double copy_fraction = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(copy_fraction >= 0.0 && copy_fraction <= 1.0)) {
      throw std::invalid_argument("copy task: copy_fraction must lie in [0, 1]");
    }
    if (seq_len == 0) throw std::invalid_argument("copy task: seq_len must be positive");
    if (shortlist <= static_cast<std::size_t>(kReservedIds) || shortlist >= vocab_size) {
      throw std::invalid_argument("copy task: need reserved ids < shortlist < vocab_size");
    }
  }

  std::size_t copies_per_example() const {
    return static_cast<std::size_t>(std::lround(copy_fraction * static_cast<double>(seq_len)));
  }
};

/// Copy task: the target repeats the source. A random subset of
/// round(copy_fraction * seq_len) positions holds ids outside the shortlist and is
/// labelled as pointers to the same position; the rest are shortlist words.
class CopyTaskGenerator {
 public:
  explicit CopyTaskGenerator(CopyTaskConfig config) : config_(config), rng_(config.seed) { config_.validate(); }

  const CopyTaskConfig& config() const { return config_; }

  PointerExample next() {
    const std::size_t n = config_.seq_len;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    // Partial Fisher-Yates picks the copied positions.
    const std::size_t k = config_.copies_per_example();
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng_.below(n - i);
      std::swap(order[i], order[j]);
    }
    std::vector<bool> copied(n, false);
    for (std::size_t i = 0; i < k; ++i) copied[order[i]] = true;

    PointerExample ex;
    const std::size_t common = config_.shortlist - kReservedIds;
    const std::size_t rare = config_.vocab_size - config_.shortlist;
    for (std::size_t j = 0; j < n; ++j) {
      if (copied[j]) {
        const int id = static_cast<int>(config_.shortlist + rng_.below(rare));
        ex.source.push_back(id);
        ex.steps.push_back(StepTarget::pointer(static_cast<int>(j)));
      } else {
        const int id = static_cast<int>(kReservedIds + rng_.below(common));
        ex.source.push_back(id);
        ex.steps.push_back(StepTarget::shortlist(id));
      }
    }
    ex.target = ex.source;
    return ex;
  }

  std::vector<PointerExample> take(std::size_t n) {
    std::vector<PointerExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

 private:
  CopyTaskConfig config_;
  Rng rng_;
};

}  // namespace psx
