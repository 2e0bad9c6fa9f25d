#include "hcbm/tape.hpp"

#include <algorithm>
#include <limits>

namespace hcbm::ad {

template <typename T>
auto BasicTape<T>::push(Node node) -> Var {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw GraphError("tape is full");
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
auto BasicTape<T>::input(Tensor value, bool requires_grad) -> Var {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
auto BasicTape<T>::parameter(Parameter& p, bool track) -> Var {
  Node n;
  n.value = p.value;
  n.requires_grad = track;
  n.param = track ? &p : nullptr;
  return push(std::move(n));
}

template <typename T>
auto BasicTape<T>::record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn fn) -> Var {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](std::uint32_t id) { return nodes_.at(id).requires_grad; });
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
  }
  return push(std::move(n));
}

template <typename T>
auto BasicTape<T>::grad(Var v) const -> Tensor {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

template <typename T>
auto BasicTape<T>::grad_accumulator(std::uint32_t id) -> Tensor& {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

template <typename T>
void BasicTape<T>::backward(Var scalar) {
  if (scalar.value().numel() != 1) {
    throw ShapeError("backward without seed needs a scalar, got " +
                     to_string(scalar.value().shape()));
  }
  backward(scalar, Tensor(scalar.value().shape(), T(1)));
}

template <typename T>
void BasicTape<T>::backward(Var out, const Tensor& seed) {
  if (out.id() >= nodes_.size() || &out.tape() != this) {
    throw GraphError("backward: variable does not belong to this tape");
  }
  if (!nodes_[out.id()].requires_grad) {
    throw GraphError("backward: output is not connected to any tracked tensor");
  }
  if (seed.shape() != nodes_[out.id()].value.shape()) {
    throw ShapeError("backward seed " + to_string(seed.shape()) + " vs output " +
                     to_string(nodes_[out.id()].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  nodes_[out.id()].grad = seed;

  for (std::int64_t i = out.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
    if (n.param != nullptr) {
      auto& acc = n.param->grad;
      if (acc.shape() != n.grad.shape()) acc = Tensor(n.grad.shape());
      for (std::size_t k = 0; k < acc.numel(); ++k) acc[k] += n.grad[k];
    }
  }
}

template <typename T>
auto BasicTape<T>::input_gradient(Var scalar, Var input) -> Tensor {
  if (!nodes_.at(input.id()).requires_grad) {
    throw GraphError("input_gradient: input was not recorded with requires_grad");
  }
  backward(scalar);
  return grad(input);
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace hcbm::ad
