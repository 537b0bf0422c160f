#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "psx/numcore/tensor.hpp"

namespace psx {

template <typename T>
struct ParamSlot {
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named trainable tensors with paired gradient accumulators.
///
/// Slots are kept in name order so every traversal (optimizer updates,
/// checkpoints, gradient norms) runs in the same deterministic order.
template <typename T>
class ParamStore {
 public:
  using Slots = std::map<std::string, ParamSlot<T>, std::less<>>;

  Tensor<T>& add(const std::string& name, Tensor<T> init) {
    if (name.empty()) throw std::invalid_argument("parameter name must be non-empty");
    if (slots_.contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Tensor<T> grad(init.shape());
    auto [it, ok] = slots_.emplace(name, ParamSlot<T>{std::move(init), std::move(grad)});
    return it->second.value;
  }

  bool contains(std::string_view name) const { return slots_.find(name) != slots_.end(); }

  ParamSlot<T>& slot(std::string_view name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }
  const ParamSlot<T>& slot(std::string_view name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  Tensor<T>& value(std::string_view name) { return slot(name).value; }
  const Tensor<T>& value(std::string_view name) const { return slot(name).value; }
  Tensor<T>& grad(std::string_view name) { return slot(name).grad; }
  const Tensor<T>& grad(std::string_view name) const { return slot(name).grad; }

  void zero_grads() {
    for (auto& [name, s] : slots_) s.grad.fill(T(0));
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(slots_.size());
    for (const auto& [name, s] : slots_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return slots_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, s] : slots_) n += s.value.size();
    return n;
  }

  Slots& slots() { return slots_; }
  const Slots& slots() const { return slots_; }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, s] : slots_) out.add(name, s.value.template cast<U>());
    return out;
  }

 private:
  Slots slots_;
};

}  // namespace psx
