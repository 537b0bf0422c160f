#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psx/numcore/tensor.hpp"

namespace psx {

/// Numerically stable softmax: the max logit is subtracted before exponentiation.
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  for (T v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
  }
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (T& v : out) v /= total;
  return out;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  return softmax(std::span<const T>(logits));
}

template <typename T>
T sigmoid(T x) {
  // Both branches avoid exp of a large positive argument.
  if (x >= 0) {
    return T(1) / (T(1) + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// Wx + b for a single vector x.
template <typename T>
std::vector<T> affine(const Tensor<T>& w, std::span<const T> x, std::span<const T> b) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw std::invalid_argument("affine: shape mismatch W" + w.shape_string() + " x[" +
                                std::to_string(x.size()) + "] b[" + std::to_string(b.size()) + "]");
  }
  std::vector<T> out(b.begin(), b.end());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    T acc = 0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += w.at(r, c) * x[c];
    out[r] += acc;
  }
  return out;
}

template <typename T>
std::vector<T> affine(const Tensor<T>& w, const std::vector<T>& x, const std::vector<T>& b) {
  return affine(w, std::span<const T>(x), std::span<const T>(b));
}

}  // namespace psx
