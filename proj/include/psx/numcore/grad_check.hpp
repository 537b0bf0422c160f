#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"

namespace psx {

struct SlotCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<SlotCheck> slots;
  double tolerance = 0.0;

  bool passed() const {
    return std::all_of(slots.begin(), slots.end(), [](const SlotCheck& s) { return s.passed; });
  }

  double worst() const {
    double w = 0.0;
    for (const auto& s : slots) w = std::max(w, s.max_relative_error);
    return w;
  }

  std::vector<std::string> failing_slots() const {
    std::vector<std::string> out;
    for (const auto& s : slots) {
      if (!s.passed) out.push_back(s.name);
    }
    return out;
  }

  std::string summary() const {
    std::ostringstream os;
    os.precision(3);
    for (const auto& s : slots) {
      os << (s.passed ? "ok   " : "FAIL ") << s.name << " max_rel=" << std::scientific
         << s.max_relative_error << " at " << s.worst_index << " (analytic " << s.analytic
         << ", numeric " << s.numeric << ")\n";
    }
    return os.str();
  }
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Compares d(loss)/d(param) from backward against central differences
/// (f(p + eps e_i) - f(p - eps e_i)) / (2 eps), eps = 1e-5 by default.
///
/// `build_loss(graph)` must record a scalar loss on the given graph using the
/// parameters of `params`, deterministically. Gradients already in the store
/// are cleared first. `after_backward`, when set, may edit the analytic
/// gradients before comparison. Never throws on a tolerance miss; inspect the
/// report.
///
/// When `build_loss` also accepts a Graph<long double>, the perturbed losses are
/// evaluated in extended precision on a converted copy of the parameters. The
/// analytic side always runs at 64-bit.
template <typename BuildLoss>
GradCheckReport grad_check(BuildLoss&& build_loss, ParamStore<double>& params, double tolerance,
                           double epsilon = 1e-5,
                           const std::function<void(ParamStore<double>&)>& after_backward = {}) {
  GradCheckReport report;
  report.tolerance = tolerance;

  params.zero_grads();
  {
    Graph<double> g(params);
    Var loss = build_loss(g);
    g.backward(loss);
  }
  if (after_backward) after_backward(params);

  using Eval = std::conditional_t<std::is_invocable_v<BuildLoss&, Graph<long double>&>, long double, double>;
  ParamStore<Eval> probe = params.template cast<Eval>();
  auto evaluate = [&]() {
    Graph<Eval> g(std::as_const(probe));
    return static_cast<Eval>(g.scalar(build_loss(g)));
  };

  for (auto& [name, slot] : params.slots()) {
    SlotCheck check;
    check.name = name;
    Tensor<Eval>& target = probe.value(name);
    for (std::size_t i = 0; i < slot.value.size(); ++i) {
      const Eval saved = target[i];
      target[i] = saved + static_cast<Eval>(epsilon);
      const Eval up = evaluate();
      target[i] = saved - static_cast<Eval>(epsilon);
      const Eval down = evaluate();
      target[i] = saved;

      const double numeric = static_cast<double>((up - down) / (2 * static_cast<Eval>(epsilon)));
      const double analytic = slot.grad[i];
      const double err = relative_error(analytic, numeric);
      if (err > check.max_relative_error || i == 0) {
        check.max_relative_error = err;
        check.worst_index = i;
        check.analytic = analytic;
        check.numeric = numeric;
      }
    }
    check.passed = check.max_relative_error <= tolerance;
    report.slots.push_back(std::move(check));
  }
  return report;
}

}  // namespace psx
