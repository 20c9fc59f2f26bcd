#include "axialseg/autograd.hpp"

#include <stdexcept>

namespace axialseg {

namespace debug {
namespace {
std::string g_fault_op;
double g_fault_factor = 1.0;
}  // namespace

void corrupt_backward(std::string op, double factor) {
  g_fault_op = std::move(op);
  g_fault_factor = factor;
}
void clear_backward_fault() {
  g_fault_op.clear();
  g_fault_factor = 1.0;
}
const std::string& corrupted_op() { return g_fault_op; }
double corrupted_factor() { return g_fault_factor; }
}  // namespace debug

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(Param<T>& p) {
  Node node;
  node.op = "param";
  node.value = p.value;
  node.requires_grad = record_ && p.trainable;
  node.param = &p;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                       BackwardFn fn) {
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape() != this) throw std::logic_error("op '" + node.op + "' mixes vars from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Tape<T>::grad(const Var<T>& v) {
  Node& node = nodes_[v.id()];
  if (node.grad.empty()) node.grad = Tensor<T>::zeros(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape() != this) throw std::logic_error("backward: loss belongs to another tape");
  if (nodes_[loss.id()].value.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(nodes_[loss.id()].value.shape()));
  }
  visits_ = 0;
  if (!nodes_[loss.id()].requires_grad) return;

  grad(loss).fill(T(1));
  const std::string& fault = debug::corrupted_op();
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.param != nullptr) {
      node.param->grad += node.grad;
      node.grad = Tensor<T>();
      continue;
    }
    if (!node.backward) continue;
    ++visits_;
    if (!fault.empty() && node.op == fault) {
      Tensor<T> g = node.grad;
      for (auto& x : g.vec()) x *= static_cast<T>(debug::corrupted_factor());
      node.backward(*this, g);
    } else {
      node.backward(*this, node.grad);
    }
    // Intermediate grads are dead once propagated.
    node.grad = Tensor<T>();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace axialseg
