#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "psx/pointer_head/step.hpp"

namespace psx {

struct PointerExample {
  std::vector<int> source;
  std::vector<int> target;
  std::vector<StepTarget> steps;

  void validate() const {
    if (steps.size() != target.size()) {
      throw std::invalid_argument("example has " + std::to_string(steps.size()) + " steps for " +
                                  std::to_string(target.size()) + " target tokens");
    }
    for (const auto& s : steps) {
      if (s.z != 0 && s.z != 1) throw std::invalid_argument("switch label must be 0 or 1");
      if (s.is_location() && s.location >= static_cast<int>(source.size())) {
        throw std::invalid_argument("pointer location " + std::to_string(s.location) + " beyond source length " +
                                    std::to_string(source.size()));
      }
      if (s.is_word() && s.word < 0) throw std::invalid_argument("word step without a word id");
    }
  }

  std::size_t pointer_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.is_location() ? 1 : 0;
    return n;
  }

  bool operator==(const PointerExample&) const = default;
};

}  // namespace psx
