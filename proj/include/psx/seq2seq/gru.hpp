#pragma once

#include <string>

#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"
#include "psx/numcore/rng.hpp"

namespace psx {

/// Registers GRU weights under `prefix`: W (3H x in) for [update|reset|candidate]
/// input projections, U_zr (2H x H) and U_h (H x H) recurrent weights, b (3H).
template <typename T>
void add_gru_params(ParamStore<T>& params, const std::string& prefix, std::size_t input, std::size_t hidden,
                    Rng& rng, double scale) {
  auto uniform = [&](std::size_t r, std::size_t c) {
    Tensor<T> t = Tensor<T>::matrix(r, c);
    for (T& v : t.values()) v = static_cast<T>(rng.uniform(-scale, scale));
    return t;
  };
  params.add(prefix + ".W", uniform(3 * hidden, input));
  params.add(prefix + ".U_zr", uniform(2 * hidden, hidden));
  params.add(prefix + ".U_h", uniform(hidden, hidden));
  params.add(prefix + ".b", Tensor<T>({3 * hidden}));
}

/// One GRU update:
///   z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r)
///   h~ = tanh(W_h x + U_h (r * h) + b_h), h' = z * h + (1 - z) * h~
/// so a saturated update gate (z -> 1) carries the previous state through.
template <typename T>
Var gru_cell(Graph<T>& g, const std::string& prefix, Var prev_hidden, Var input) {
  const Var u_h = g.param(prefix + ".U_h");
  const std::size_t hidden = g.value(u_h).rows();
  if (g.value(prev_hidden).cols() != hidden) {
    throw std::invalid_argument("gru_cell '" + prefix + "': hidden width " +
                                std::to_string(g.value(prev_hidden).cols()) + " != " + std::to_string(hidden));
  }
  if (g.value(input).cols() != g.value(g.param(prefix + ".W")).cols()) {
    throw std::invalid_argument("gru_cell '" + prefix + "': input width mismatch");
  }
  const Var gx = g.affine(g.param(prefix + ".W"), input, g.param(prefix + ".b"));
  const Var gh = g.matmul_nt(prev_hidden, g.param(prefix + ".U_zr"));
  const Var z = g.sigmoid(g.add(g.slice_cols(gx, 0, hidden), g.slice_cols(gh, 0, hidden)));
  const Var r = g.sigmoid(g.add(g.slice_cols(gx, hidden, hidden), g.slice_cols(gh, hidden, hidden)));
  const Var cand = g.tanh(g.add(g.slice_cols(gx, 2 * hidden, hidden), g.matmul_nt(g.mul(r, prev_hidden), u_h)));
  return g.add(g.mul(z, prev_hidden), g.mul(g.one_minus(z), cand));
}

}  // namespace psx
