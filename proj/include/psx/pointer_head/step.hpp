#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace psx {

/// Floor applied to every probability before taking its log.
inline constexpr double kProbabilityFloor = 1e-12;

/// Observation at one target step: a shortlist word (z = 1) or a source
/// location (z = 0). A z = 0 step with a negative location is resolved at
/// training time to the argmax of the model's current location distribution.
struct StepTarget {
  int z = 1;
  int word = -1;
  int location = -1;

  static StepTarget shortlist(int id) { return {1, id, -1}; }
  static StepTarget pointer(int loc) { return {0, -1, loc}; }
  static StepTarget pointer_to_attention_argmax() { return {0, -1, -1}; }

  bool is_word() const { return z == 1; }
  bool is_location() const { return z == 0; }
  bool location_pending() const { return z == 0 && location < 0; }

  bool operator==(const StepTarget&) const = default;
};

/// Distributions produced at one decoder step.
template <typename T>
struct StepOutput {
  std::vector<T> w;      // shortlist distribution
  std::vector<T> loc;    // location distribution over source positions
  T d = T(0.5);          // p(z = 1)
  std::vector<T> fused;  // [d * w || (1 - d) * loc]
};

namespace detail {

template <typename T>
void require_distribution(const std::vector<T>& p, const char* what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + " is empty");
  T total = 0;
  for (T v : p) {
    if (!(v >= T(0)) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " has invalid entry");
    total += v;
  }
  const T tol = sizeof(T) == 4 ? T(1e-5) : T(1e-9);
  if (std::abs(total - T(1)) > tol) throw std::invalid_argument(std::string(what) + " does not sum to 1");
}

}  // namespace detail

/// Concatenates d * w and (1 - d) * loc, shortlist block first.
template <typename T>
std::vector<T> fuse(const std::vector<T>& w, const std::vector<T>& loc, T d) {
  detail::require_distribution(w, "shortlist distribution");
  detail::require_distribution(loc, "location distribution");
  if (!(d > T(0) && d < T(1))) throw std::invalid_argument("switch probability must lie in (0, 1)");
  std::vector<T> out;
  out.reserve(w.size() + loc.size());
  const T keep = T(1) - d;
  for (T v : w) out.push_back(v * d);
  for (T v : loc) out.push_back(v * keep);
  return out;
}

template <typename T>
StepOutput<T> make_step_output(std::vector<T> w, std::vector<T> loc, T d) {
  StepOutput<T> out{std::move(w), std::move(loc), d, {}};
  out.fused = fuse(out.w, out.loc, out.d);
  return out;
}

/// Index of a target inside the fused vector.
inline std::size_t fused_index(const StepTarget& target, std::size_t shortlist, std::size_t src_len) {
  if (target.is_word()) {
    if (target.word < 0 || static_cast<std::size_t>(target.word) >= shortlist) {
      throw std::invalid_argument("target word " + std::to_string(target.word) + " outside shortlist");
    }
    return static_cast<std::size_t>(target.word);
  }
  if (target.location < 0 || static_cast<std::size_t>(target.location) >= src_len) {
    throw std::invalid_argument("target location " + std::to_string(target.location) + " outside source of length " +
                                std::to_string(src_len));
  }
  return shortlist + static_cast<std::size_t>(target.location);
}

/// -log p(y_t, z_t): -log(d * w[word]) for words, -log((1 - d) * loc[j]) for
/// locations, evaluated with the same products as `fuse`.
template <typename T>
T step_nll(const StepOutput<T>& out, const StepTarget& target) {
  const std::size_t idx = fused_index(target, out.w.size(), out.loc.size());
  const T p = target.is_word() ? out.w[idx] * out.d : out.loc[idx - out.w.size()] * (T(1) - out.d);
  const T floor = static_cast<T>(kProbabilityFloor);
  return -std::log(p > floor ? p : floor);
}

}  // namespace psx
