#pragma once

#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "axialseg/tensor.hpp"

namespace axialseg {

/// A named learnable tensor with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Param(std::string name_, Tensor<T> value_)
      : name(std::move(name_)), value(std::move(value_)), grad(Tensor<T>::zeros(value.shape())) {}

  void zero_grad() { grad.fill(T(0)); }
  std::size_t numel() const { return value.numel(); }
};

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. A fresh tape is built for every forward pass.
///
/// Nodes are appended in execution order, so the node list is already
/// topologically sorted. backward() replays the rules of every node that
/// received a gradient, last to first, then flushes leaf gradients into
/// their Params with +=.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  /// With record=false nothing requires grad and no backward rules are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Leaf bound to a Param. Requires grad only when recording and the param is trainable.
  Var<T> param(Param<T>& p);

  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn);

  /// Accumulates d(loss)/d(param) into every trainable Param reachable from
  /// loss. Calling it again on the same tape accumulates a second time.
  void backward(Var<T> loss);

  bool recording() const { return record_; }
  bool needs_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }
  const Tensor<T>& value(const Var<T>& v) const { return nodes_[v.id()].value; }
  /// Gradient buffer of a node, zero-allocated on first access.
  Tensor<T>& grad(const Var<T>& v);
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  /// Number of backward rules executed by the last backward() call.
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Param<T>* param = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  bool record_;
  std::size_t visits_ = 0;
  std::deque<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->needs_grad(*this);
}

namespace debug {

/// Negative-control hook: multiplies the incoming gradient of every node whose
/// op name equals `op` by `factor` during backward. Empty op disables it.
void corrupt_backward(std::string op, double factor = 1.5);
void clear_backward_fault();
const std::string& corrupted_op();
double corrupted_factor();

}  // namespace debug

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace axialseg
