#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psx/datasets/example.hpp"
#include "psx/numcore/graph.hpp"
#include "psx/numcore/param_store.hpp"
#include "psx/pointer_head/model.hpp"
#include "psx/training/config.hpp"
#include "psx/training/evaluate.hpp"
#include "psx/training/optimizers.hpp"

namespace psx {

struct CurvePoint {
  std::size_t updates = 0;
  double train_nll = 0.0;
  double dev_nll = 0.0;
  double dev_metric = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct Curves {
  std::vector<CurvePoint> points;

  void append(const CurvePoint& p) {
    if (!points.empty() && p.updates <= points.back().updates) {
      throw std::logic_error("curve update counts must increase");
    }
    points.push_back(p);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "updates,train_nll,dev_nll,dev_metric\n";
    for (const auto& p : points) os << p.updates << ',' << p.train_nll << ',' << p.dev_nll << ',' << p.dev_metric << '\n';
    return os.str();
  }

  bool operator==(const Curves&) const = default;
};

/// Raised when the loss or a gradient stops being finite.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TrainResult {
  ParamStore<T> best;
  Curves curves;
  std::size_t updates = 0;
  double best_dev_nll = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
};

/// Source of training examples; called once per example, in order.
using ExampleStream = std::function<PointerExample()>;

/// Cycles through a fixed dataset, reshuffling each pass with a seeded generator.
class EpochStream {
 public:
  EpochStream(std::vector<PointerExample> data, std::uint64_t seed) : data_(std::move(data)), rng_(seed) {
    if (data_.empty()) throw std::invalid_argument("training set is empty");
    order_.resize(data_.size());
    reshuffle();
  }

  PointerExample operator()() {
    if (pos_ == order_.size()) reshuffle();
    return data_[order_[pos_++]];
  }

 private:
  void reshuffle() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    pos_ = 0;
  }

  std::vector<PointerExample> data_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

/// Teacher-forced minibatch NLL of one batch, accumulated into the parameter
/// gradients scaled by 1 / batch size. Examples are grouped by shape; groups run
/// in a fixed order so the reduction is deterministic.
template <typename T>
double accumulate_batch_gradients(const PointerSoftmaxModel<T>& model, ParamStore<T>& params,
                                  std::span<const PointerExample> batch, std::size_t* steps_out = nullptr) {
  std::vector<std::size_t> all(batch.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  double total = 0.0;
  std::size_t steps = 0;
  const T inv = T(1) / static_cast<T>(batch.size());
  for (const auto& [shape, idx] : group_by_shape(batch, all)) {
    std::vector<const PointerExample*> group;
    for (std::size_t i : idx) group.push_back(&batch[i]);
    Graph<T> g(params);
    const ForwardResult fr = model.forward(g, group);
    const Var loss = g.scale(fr.total_nll, inv);
    total += static_cast<double>(g.scalar(fr.total_nll));
    steps += fr.step_count;
    g.backward(loss);
  }
  if (steps_out) *steps_out = steps;
  return total;
}

/// Minimizes the teacher-forced NLL with observed switches. Evaluates on `dev`
/// every `eval_every` updates, keeps the parameters with the best dev NLL and
/// stops after `early_stop_patience` evaluations without improvement.
/// `eval_threads` only parallelizes the read-only dev evaluation.
template <typename T>
TrainResult<T> train(const PointerSoftmaxModel<T>& model, ParamStore<T>& params, const ExampleStream& stream,
                     std::span<const PointerExample> dev, const TrainConfig& config,
                     const std::function<void(const CurvePoint&)>& on_eval = {}, std::size_t eval_threads = 1) {
  config.validate();
  TrainResult<T> result;
  result.best = params;
  if (config.max_updates == 0) return result;

  std::optional<Adam<T>> adam;
  std::optional<Adadelta<T>> adadelta;
  if (config.optimizer == "adam") {
    adam.emplace(config.learning_rate);
  } else {
    adadelta.emplace(config.adadelta_rho, config.adadelta_eps);
  }

  double window_nll = 0.0;
  std::size_t window_steps = 0;
  std::size_t since_best = 0;
  std::vector<PointerExample> batch;
  for (std::size_t update = 1; update <= config.max_updates; ++update) {
    batch.clear();
    for (std::size_t i = 0; i < config.batch_size; ++i) batch.push_back(stream());

    params.zero_grads();
    std::size_t steps = 0;
    double nll = 0.0;
    try {
      nll = accumulate_batch_gradients(model, params, batch, &steps);
      if (!std::isfinite(nll)) throw NumericalError("loss is not finite");
      clip_global_norm(params, config.max_grad_norm);
    } catch (const NumericalError& e) {
      throw TrainingAborted("update " + std::to_string(update) + " (batch " + std::to_string(update - 1) +
                            "): " + e.what());
    }
    if (adam) {
      adam->step(params);
    } else {
      adadelta->step(params);
    }
    window_nll += nll;
    window_steps += steps;
    result.updates = update;

    if (update % config.eval_every == 0 || update == config.max_updates) {
      CurvePoint p;
      p.updates = update;
      p.train_nll = window_steps ? window_nll / static_cast<double>(window_steps) : 0.0;
      window_nll = 0.0;
      window_steps = 0;
      if (!dev.empty()) {
        const Metrics m = evaluate(model, static_cast<const ParamStore<T>&>(params), dev, 256, eval_threads);
        p.dev_nll = m.mean_nll;
        p.dev_metric = m.error_rate;
      }
      result.curves.append(p);
      if (on_eval) on_eval(p);
      if (dev.empty() || p.dev_nll < result.best_dev_nll) {
        result.best_dev_nll = dev.empty() ? p.train_nll : p.dev_nll;
        result.best = params;
        since_best = 0;
      } else if (++since_best >= config.early_stop_patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace psx
