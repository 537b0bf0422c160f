#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "psx/numcore/param_store.hpp"
#include "psx/numcore/tensor.hpp"

namespace psx {

/// Raised when a recorded operation produces NaN or Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Handle to a node recorded on a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over batched row-major matrices.
///
/// Every value is treated as a (rows x cols) matrix; a batch of B examples is
/// carried as B rows. A graph records one forward pass and supports backward
/// from a scalar node; it is not meant to be reused across minibatches.
template <typename T>
class Graph {
 public:
  using value_type = T;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapMat = Eigen::Map<Mat>;
  using ConstMapMat = Eigen::Map<const Mat>;

  Graph() = default;
  explicit Graph(ParamStore<T>& params) : params_(&params) {}
  /// Read-only parameters imply an inference-only graph.
  explicit Graph(const ParamStore<T>& params)
      : params_(const_cast<ParamStore<T>*>(&params)), inference_(true), read_only_(true) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Disables gradient bookkeeping; forward values are unchanged.
  void set_inference(bool on) { inference_ = on || read_only_; }
  void set_finite_checks(bool on) { finite_checks_ = on; }

  std::size_t node_count() const { return nodes_.size(); }

  Var constant(Tensor<T> value) { return push(std::move(value), false, "constant"); }

  Var param(std::string_view name) {
    if (params_ == nullptr) throw std::logic_error("graph has no parameter store");
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return it->second;
    ParamSlot<T>& s = params_->slot(name);
    Var v = push(s.value, !inference_, "param");
    nodes_[v.id].slot = &s;
    param_nodes_.emplace(std::string(name), v);
    return v;
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  T scalar(Var v) const {
    const auto& t = value(v);
    if (t.size() != 1) throw std::invalid_argument("node is not a scalar");
    return t[0];
  }

  /// Gradient of the last backward pass with respect to node v (zeros if unreached).
  Tensor<T> gradient(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// x * W^T for x (B x in) and W (out x in).
  Var matmul_nt(Var x, Var w) {
    const auto& X = value(x);
    const auto& W = value(w);
    if (X.cols() != W.cols()) {
      throw std::invalid_argument("matmul_nt: inner dimensions differ " + X.shape_string() + " vs " +
                                  W.shape_string());
    }
    Tensor<T> out = Tensor<T>::matrix(X.rows(), W.rows());
    map(out).noalias() = cmap(X) * cmap(W).transpose();
    return record(std::move(out), {x, w}, "matmul_nt", [this, x, w](int self) {
      const ConstMapMat dy = cmap(nodes_[self].grad);
      if (wants(x)) map(grad(x)).noalias() += dy * cmap(value(w));
      if (wants(w)) map(grad(w)).noalias() += dy.transpose() * cmap(value(x));
    });
  }

  /// x * W^T + b with b broadcast over rows.
  Var affine(Var w, Var x, Var b) {
    const auto& W = value(w);
    const auto& B = value(b);
    if (B.rows() != 1 || B.cols() != W.rows()) {
      throw std::invalid_argument("affine: bias " + B.shape_string() + " does not match weight " +
                                  W.shape_string());
    }
    return add(matmul_nt(x, w), b);
  }

  /// Elementwise sum; b may also be a single row broadcast over a's rows.
  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& Bv = value(b);
    const bool broadcast = Bv.rows() == 1 && A.rows() > 1 && Bv.cols() == A.cols();
    if (!broadcast && !A.same_shape(Bv)) {
      throw std::invalid_argument("add: shape mismatch " + A.shape_string() + " vs " + Bv.shape_string());
    }
    Tensor<T> out = as_matrix(A);
    if (broadcast) {
      map(out).rowwise() += cmap(Bv).row(0);
    } else {
      map(out) += cmap(Bv);
    }
    return record(std::move(out), {a, b}, "add", [this, a, b, broadcast](int self) {
      const ConstMapMat dy = cmap(nodes_[self].grad);
      if (wants(a)) map(grad(a)) += dy;
      if (wants(b)) {
        if (broadcast) {
          map(grad(b)).row(0) += dy.colwise().sum();
        } else {
          map(grad(b)) += dy;
        }
      }
    });
  }

  Var sub(Var a, Var b) {
    const auto& A = value(a);
    const auto& Bv = value(b);
    if (!A.same_shape(Bv)) {
      throw std::invalid_argument("sub: shape mismatch " + A.shape_string() + " vs " + Bv.shape_string());
    }
    Tensor<T> out = as_matrix(A);
    map(out) -= cmap(Bv);
    return record(std::move(out), {a, b}, "sub", [this, a, b](int self) {
      const ConstMapMat dy = cmap(nodes_[self].grad);
      if (wants(a)) map(grad(a)) += dy;
      if (wants(b)) map(grad(b)) -= dy;
    });
  }

  /// Elementwise (Hadamard) product.
  Var mul(Var a, Var b) {
    const auto& A = value(a);
    const auto& Bv = value(b);
    if (!A.same_shape(Bv)) {
      throw std::invalid_argument("mul: shape mismatch " + A.shape_string() + " vs " + Bv.shape_string());
    }
    Tensor<T> out = as_matrix(A);
    map(out).array() *= cmap(Bv).array();
    return record(std::move(out), {a, b}, "mul", [this, a, b](int self) {
      const ConstMapMat dy = cmap(nodes_[self].grad);
      if (wants(a)) map(grad(a)).array() += dy.array() * cmap(value(b)).array();
      if (wants(b)) map(grad(b)).array() += dy.array() * cmap(value(a)).array();
    });
  }

  Var scale(Var a, T factor) {
    Tensor<T> out = as_matrix(value(a));
    map(out) *= factor;
    return record(std::move(out), {a}, "scale", [this, a, factor](int self) {
      if (wants(a)) map(grad(a)) += factor * cmap(nodes_[self].grad);
    });
  }

  /// 1 - a, elementwise.
  Var one_minus(Var a) {
    Tensor<T> out = as_matrix(value(a));
    map(out).array() = T(1) - map(out).array();
    return record(std::move(out), {a}, "one_minus", [this, a](int self) {
      if (wants(a)) map(grad(a)) -= cmap(nodes_[self].grad);
    });
  }

  Var tanh(Var a) {
    Tensor<T> out = as_matrix(value(a));
    map(out).array() = map(out).array().tanh();
    return record(std::move(out), {a}, "tanh", [this, a](int self) {
      if (!wants(a)) return;
      const ConstMapMat y = cmap(nodes_[self].value);
      map(grad(a)).array() += cmap(nodes_[self].grad).array() * (T(1) - y.array().square());
    });
  }

  Var sigmoid(Var a) {
    Tensor<T> out = as_matrix(value(a));
    for (T& v : out.values()) v = stable_sigmoid(v);
    return record(std::move(out), {a}, "sigmoid", [this, a](int self) {
      if (!wants(a)) return;
      const ConstMapMat y = cmap(nodes_[self].value);
      map(grad(a)).array() += cmap(nodes_[self].grad).array() * y.array() * (T(1) - y.array());
    });
  }

  Var relu(Var a) {
    Tensor<T> out = as_matrix(value(a));
    map(out).array() = map(out).array().max(T(0));
    return record(std::move(out), {a}, "relu", [this, a](int self) {
      if (!wants(a)) return;
      const ConstMapMat x = cmap(value(a));
      map(grad(a)).array() += (x.array() > T(0)).select(cmap(nodes_[self].grad).array(), T(0));
    });
  }

  /// Row-wise softmax with max subtraction.
  Var softmax(Var a) {
    const auto& A = value(a);
    if (!A.all_finite()) throw std::invalid_argument("softmax: non-finite logit");
    Tensor<T> out = as_matrix(A);
    MapMat y = map(out);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const T mx = y.row(r).maxCoeff();
      y.row(r).array() = (y.row(r).array() - mx).exp();
      y.row(r) /= y.row(r).sum();
    }
    return record(std::move(out), {a}, "softmax", [this, a](int self) {
      if (!wants(a)) return;
      const ConstMapMat y = cmap(nodes_[self].value);
      const ConstMapMat dy = cmap(nodes_[self].grad);
      // dx = y * (dy - <dy, y>) per row
      const auto inner = (dy.array() * y.array()).rowwise().sum().eval();
      map(grad(a)).array() += y.array() * (dy.array().colwise() - inner);
    });
  }

  /// Horizontal concatenation of equal-row-count operands.
  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
      cols += value(p).cols();
    }
    Tensor<T> out = Tensor<T>::matrix(rows, cols);
    std::size_t offset = 0;
    std::vector<Var> inputs(parts.begin(), parts.end());
    for (Var p : parts) {
      const auto& P = value(p);
      map(out).middleCols(offset, P.cols()) = cmap(P);
      offset += P.cols();
    }
    return record(std::move(out), inputs, "concat_cols", [this, inputs](int self) {
      std::size_t off = 0;
      const ConstMapMat dy = cmap(nodes_[self].grad);
      for (Var p : inputs) {
        const std::size_t c = value(p).cols();
        if (wants(p)) map(grad(p)) += dy.middleCols(off, c);
        off += c;
      }
    });
  }

  Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
  }

  Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const auto& A = value(a);
    if (count == 0 || begin + count > A.cols()) throw std::invalid_argument("slice_cols: out of range");
    Tensor<T> out = Tensor<T>::matrix(A.rows(), count);
    map(out) = cmap(A).middleCols(begin, count);
    return record(std::move(out), {a}, "slice_cols", [this, a, begin, count](int self) {
      if (wants(a)) map(grad(a)).middleCols(begin, count) += cmap(nodes_[self].grad);
    });
  }

  /// Gathers rows of an embedding table.
  Var lookup(Var table, std::span<const int> ids) {
    const auto& E = value(table);
    if (ids.empty()) throw std::invalid_argument("lookup: no ids");
    std::vector<int> idx(ids.begin(), ids.end());
    Tensor<T> out = Tensor<T>::matrix(idx.size(), E.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= E.rows()) {
        throw std::invalid_argument("lookup: id " + std::to_string(idx[r]) + " outside table of " +
                                    std::to_string(E.rows()) + " rows");
      }
      std::copy_n(E.row(idx[r]).data(), E.cols(), out.row(r).data());
    }
    return record(std::move(out), {table}, "lookup", [this, table, idx](int self) {
      if (!wants(table)) return;
      Tensor<T>& g = grad(table);
      const Tensor<T>& dy = nodes_[self].grad;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        auto dst = g.row(idx[r]);
        auto src = dy.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
    });
  }

  /// Selects x[r, cols[r]] for every row r; result is (rows x 1).
  Var pick(Var x, std::span<const int> cols) {
    const auto& X = value(x);
    if (cols.size() != X.rows()) throw std::invalid_argument("pick: one index per row required");
    std::vector<int> idx(cols.begin(), cols.end());
    Tensor<T> out = Tensor<T>::matrix(X.rows(), 1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= X.cols()) {
        throw std::invalid_argument("pick: column " + std::to_string(idx[r]) + " out of range");
      }
      out[r] = X.at(r, idx[r]);
    }
    return record(std::move(out), {x}, "pick", [this, x, idx](int self) {
      if (!wants(x)) return;
      Tensor<T>& g = grad(x);
      for (std::size_t r = 0; r < idx.size(); ++r) g.at(r, idx[r]) += nodes_[self].grad[r];
    });
  }

  /// log(max(x, floor)); the gradient is zero where the floor is active.
  Var log(Var a, T floor = T(1e-12)) {
    Tensor<T> out = as_matrix(value(a));
    for (T& v : out.values()) v = std::log(v > floor ? v : floor);
    return record(std::move(out), {a}, "log", [this, a, floor](int self) {
      if (!wants(a)) return;
      const ConstMapMat x = cmap(value(a));
      const ConstMapMat dy = cmap(nodes_[self].grad);
      map(grad(a)).array() += (x.array() > floor).select(dy.array() / x.array(), T(0));
    });
  }

  /// Sum of all elements as a (1 x 1) node.
  Var sum(Var a) {
    Tensor<T> out = Tensor<T>::matrix(1, 1);
    out[0] = cmap(value(a)).sum();
    return record(std::move(out), {a}, "sum", [this, a](int self) {
      if (wants(a)) map(grad(a)).array() += nodes_[self].grad[0];
    });
  }

  /// Multiplies row r of x by the scalar s[r]; s is (rows x 1).
  Var scale_rows(Var x, Var s) {
    const auto& X = value(x);
    const auto& S = value(s);
    if (S.cols() != 1 || S.rows() != X.rows()) {
      throw std::invalid_argument("scale_rows: scale " + S.shape_string() + " incompatible with " +
                                  X.shape_string());
    }
    Tensor<T> out = as_matrix(X);
    map(out).array().colwise() *= cmap(S).col(0).array();
    return record(std::move(out), {x, s}, "scale_rows", [this, x, s](int self) {
      const ConstMapMat dy = cmap(nodes_[self].grad);
      if (wants(x)) map(grad(x)).array() += dy.array().colwise() * cmap(value(s)).col(0).array();
      if (wants(s)) map(grad(s)).col(0) += (dy.array() * cmap(value(x)).array()).rowwise().sum().matrix();
    });
  }

  /// Accumulates d(loss)/d(param) into the parameter store; repeated calls add up.
  void backward(Var loss) {
    const auto& L = value(loss);
    if (L.size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got shape " + L.shape_string());
    }
    for (Node& n : nodes_) {
      if (!n.grad.empty()) n.grad.fill(T(0));
    }
    if (read_only_) throw std::logic_error("backward on a graph over read-only parameters");
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss)[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.back) n.back(i);
      if (n.slot != nullptr) {
        if (n.slot->grad.size() != n.grad.size()) {
          throw std::logic_error("parameter gradient shape mismatch");
        }
        map(n.slot->grad) += cmap(n.grad);
      }
    }
  }

  static T stable_sigmoid(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(int)> back;
    ParamSlot<T>* slot = nullptr;
    bool needs_grad = false;
  };

  static Tensor<T> as_matrix(const Tensor<T>& t) {
    return Tensor<T>({t.rows(), t.cols()}, std::vector<T>(t.values().begin(), t.values().end()));
  }

  static MapMat map(Tensor<T>& t) {
    return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  }
  static ConstMapMat cmap(const Tensor<T>& t) {
    return ConstMapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  }

  bool wants(Var v) const { return nodes_[v.id].needs_grad; }

  Tensor<T>& grad(Var v) { return grad(v.id); }
  Tensor<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  Var push(Tensor<T> value, bool needs_grad, const char* op) {
    if (finite_checks_ && !value.all_finite()) {
      throw NumericalError(std::string("non-finite value produced by ") + op);
    }
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, needs_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var record(Tensor<T> value, std::initializer_list<Var> inputs, const char* op,
             std::function<void(int)> back) {
    return record(std::move(value), std::vector<Var>(inputs), op, std::move(back));
  }

  Var record(Tensor<T> value, const std::vector<Var>& inputs, const char* op,
             std::function<void(int)> back) {
    bool needs = false;
    if (!inference_) {
      for (Var v : inputs) needs = needs || nodes_.at(v.id).needs_grad;
    }
    Var out = push(std::move(value), needs, op);
    if (needs) nodes_[out.id].back = std::move(back);
    return out;
  }

  ParamStore<T>* params_ = nullptr;
  std::vector<Node> nodes_;
  std::map<std::string, Var, std::less<>> param_nodes_;
  bool inference_ = false;
  bool read_only_ = false;
  bool finite_checks_ = true;
};

}  // namespace psx
