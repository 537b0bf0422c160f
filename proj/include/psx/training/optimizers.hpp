#pragma once

#include <cmath>
#include <map>
#include <string>

#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"

namespace psx {

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the factor applied (1 when no clipping happened).
template <typename T>
double clip_global_norm(ParamStore<T>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be positive");
  double sq = 0.0;
  for (const auto& [name, slot] : params.slots()) {
    double local = 0.0;
    for (T g : slot.grad.values()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in slot '" + name + "'");
      local += static_cast<double>(g) * static_cast<double>(g);
    }
    sq += local;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (auto& [name, slot] : params.slots()) {
    for (T& g : slot.grad.values()) g = static_cast<T>(g * factor);
  }
  return factor;
}

template <typename T>
double global_grad_norm(const ParamStore<T>& params) {
  double sq = 0.0;
  for (const auto& [name, slot] : params.slots()) {
    for (T g : slot.grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

/// Bias-corrected Adam. The step counter advances on every call to step().
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  }

  void step(ParamStore<T>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, slot] : params.slots()) {
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m = Tensor<T>(slot.value.shape());
        st.v = Tensor<T>(slot.value.shape());
      }
      const std::size_t n = slot.value.size();
      T* p = slot.value.data();
      const T* g = slot.grad.data();
      T* m = st.m.data();
      T* v = st.v.data();
      const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
      const T step = static_cast<T>(lr_ / c1);
      const T inv_c2 = static_cast<T>(1.0 / c2);
      const T eps = static_cast<T>(eps_);
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Adadelta with unit learning rate:
///   E[g^2] = rho E[g^2] + (1 - rho) g^2
///   dx = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] = rho E[dx^2] + (1 - rho) dx^2
template <typename T>
class Adadelta {
 public:
  explicit Adadelta(double rho = 0.95, double eps = 1e-6) : rho_(rho), eps_(eps) {}

  void step(ParamStore<T>& params) {
    for (auto& [name, slot] : params.slots()) {
      auto& st = state_[name];
      if (st.g2.empty()) {
        st.g2 = Tensor<T>(slot.value.shape());
        st.dx2 = Tensor<T>(slot.value.shape());
      }
      const T rho = static_cast<T>(rho_);
      const T eps = static_cast<T>(eps_);
      for (std::size_t i = 0; i < slot.value.size(); ++i) {
        const T g = slot.grad[i];
        st.g2[i] = rho * st.g2[i] + (T(1) - rho) * g * g;
        const T dx = -std::sqrt(st.dx2[i] + eps) / std::sqrt(st.g2[i] + eps) * g;
        st.dx2[i] = rho * st.dx2[i] + (T(1) - rho) * dx * dx;
        slot.value[i] += dx;
      }
    }
  }

  const Tensor<T>& grad_accumulator(const std::string& name) const { return state_.at(name).g2; }
  const Tensor<T>& update_accumulator(const std::string& name) const { return state_.at(name).dx2; }

 private:
  struct Accumulators {
    Tensor<T> g2;
    Tensor<T> dx2;
  };
  double rho_, eps_;
  std::map<std::string, Accumulators> state_;
};

}  // namespace psx
