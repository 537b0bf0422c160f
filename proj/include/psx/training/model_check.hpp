#pragma once

#include <cstdint>
#include <type_traits>

#include "psx/datasets/example.hpp"
#include "psx/numcore/grad_check.hpp"
#include "psx/numcore/rng.hpp"
#include "psx/pointer_head/model.hpp"

namespace psx {

/// Random example for `config`: source ids below src_vocab, and target steps
/// alternating between shortlist words and source pointers (pointer head), so
/// both branches of the switch receive gradient.
inline PointerExample random_check_example(const ModelConfig& config, std::size_t src_len, std::size_t tgt_len,
                                           Rng& rng) {
  PointerExample ex;
  for (std::size_t j = 0; j < src_len; ++j) ex.source.push_back(static_cast<int>(rng.below(config.src_vocab)));
  for (std::size_t t = 0; t < tgt_len; ++t) {
    const bool point = config.head == Head::pointer && t % 2 == 1;
    if (point) {
      const int loc = static_cast<int>(rng.below(src_len));
      ex.steps.push_back(StepTarget::pointer(loc));
      ex.target.push_back(config.shared_vocab ? ex.source[static_cast<std::size_t>(loc)] : config.unk_id);
    } else {
      const int w = static_cast<int>(rng.below(std::min(config.shortlist, config.tgt_vocab)));
      ex.steps.push_back(StepTarget::shortlist(w));
      ex.target.push_back(w);
    }
  }
  return ex;
}

/// Finite-difference check of the teacher-forced sequence NLL of a freshly
/// initialized 64-bit model on one random example.
inline GradCheckReport check_model_gradients(const ModelConfig& config, std::uint64_t seed, std::size_t src_len,
                                             std::size_t tgt_len, double tolerance) {
  PointerSoftmaxModel<double> model(config);
  ParamStore<double> params;
  model.init_params(params, seed);
  Rng rng(Rng::mix(seed, 0x9e37));
  const PointerExample ex = random_check_example(config, src_len, tgt_len, rng);
  const PointerExample* batch[] = {&ex};
  return grad_check(
      [&](auto& g) {
        using U = typename std::remove_reference_t<decltype(g)>::value_type;
        PointerSoftmaxModel<U> m(config);
        return m.forward(g, batch).total_nll;
      },
      params, tolerance);
}

}  // namespace psx
