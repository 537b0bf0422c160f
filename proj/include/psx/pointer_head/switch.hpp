#pragma once

#include <string>

#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"
#include "psx/numcore/rng.hpp"
#include "psx/seq2seq/attention.hpp"
#include "psx/seq2seq/config.hpp"

namespace psx {

template <typename T>
void add_switch_params(ParamStore<T>& p, std::size_t input, std::size_t hidden, double bias_init, double scale,
                       Rng& rng) {
  p.add("switch.W1", detail::uniform_matrix<T>(rng, hidden, input, scale));
  p.add("switch.b1", Tensor<T>({hidden}));
  p.add("switch.W2", detail::uniform_matrix<T>(rng, hidden, hidden, scale));
  p.add("switch.b2", Tensor<T>({hidden}));
  p.add("switch.v", detail::uniform_matrix<T>(rng, 1, hidden, scale));
  p.add("switch.c", Tensor<T>({1}, {static_cast<T>(bias_init)}));
}

/// Scalar pre-activation of the switching MLP, (batch x 1).
template <typename T>
Var switch_preactivation(Graph<T>& g, Var input, SwitchActivation act) {
  const Var a1 = g.affine(g.param("switch.W1"), input, g.param("switch.b1"));
  Var h2;
  if (act == SwitchActivation::relu) {
    h2 = g.relu(g.affine(g.param("switch.W2"), g.relu(a1), g.param("switch.b2")));
  } else {
    const Var lifted = g.add(g.tanh(a1), a1);
    h2 = g.tanh(g.affine(g.param("switch.W2"), lifted, g.param("switch.b2")));
  }
  return g.affine(g.param("switch.v"), h2, g.param("switch.c"));
}

/// d = sigmoid(inverse_temperature * mlp(input)) = p(z = 1).
template <typename T>
Var switch_prob(Graph<T>& g, Var input, SwitchActivation act, double inverse_temperature) {
  if (!(inverse_temperature > 0.0)) throw std::invalid_argument("inverse temperature must be positive");
  return g.sigmoid(g.scale(switch_preactivation(g, input, act), static_cast<T>(inverse_temperature)));
}

/// Switch conditioned on the context vector and the previous decoder state.
template <typename T>
Var switch_prob(Graph<T>& g, Var context, Var prev_hidden, SwitchActivation act, double inverse_temperature) {
  return switch_prob(g, g.concat_cols({context, prev_hidden}), act, inverse_temperature);
}

}  // namespace psx
