#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "hcbm/tensor.hpp"

namespace hcbm::ad {

/// A trainable tensor together with its accumulated gradient.
template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class BasicTape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape
/// lives.
template <typename T>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(BasicTape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] BasicTape<T>& tape() const { return *tape_; }
  [[nodiscard]] std::uint32_t id() const noexcept { return id_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

  [[nodiscard]] const BasicTensor<T>& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] bool requires_grad() const;

 private:
  BasicTape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Ordered record of executed operations. Nodes are appended in execution
/// order, so the record is topologically sorted and backward is a single
/// reverse sweep. A tape is owned by one thread.
template <typename T>
class BasicTape {
 public:
  using Tensor = BasicTensor<T>;
  using Var = BasicVar<T>;
  using Parameter = BasicParameter<T>;
  /// Propagates the gradient of node `self` into its inputs.
  using BackwardFn = std::function<void(BasicTape&, std::uint32_t self)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var input(Tensor value, bool requires_grad = false);
  /// Records a parameter. When `track` is false the parameter enters as a
  /// constant, which is what input-gradient queries want.
  Var parameter(Parameter& p, bool track = true);

  /// Used by op implementations: records an output node. The node requires
  /// grad iff any input does; otherwise `fn` is dropped.
  Var record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn fn);

  [[nodiscard]] const Tensor& value(std::uint32_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }
  [[nodiscard]] bool has_grad(std::uint32_t id) const { return !nodes_.at(id).grad.empty(); }
  /// Gradient of the node from the latest backward sweep (zeros if none).
  [[nodiscard]] Tensor grad(Var v) const;
  [[nodiscard]] const Tensor& grad_ref(std::uint32_t id) const { return nodes_.at(id).grad; }

  /// Gradient accumulator of a node, allocated on first use. Only nodes that
  /// require grad have one.
  Tensor& grad_accumulator(std::uint32_t id);

  /// Backward from a scalar output with seed 1.
  void backward(Var scalar);
  /// Backward from any output with an explicit seed gradient. Node gradients
  /// from an earlier sweep are discarded; parameter gradients accumulate.
  void backward(Var out, const Tensor& seed);

  /// d(scalar)/d(input) without touching parameter gradients of constants.
  Tensor input_gradient(Var scalar, Var input);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
  };

  Var push(Node node);

  // deque keeps references stable while ops append nodes.
  std::deque<Node> nodes_;
};

template <typename T>
const BasicTensor<T>& BasicVar<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool BasicVar<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

using Tape = BasicTape<float>;
using Var = BasicVar<float>;
using Parameter = BasicParameter<float>;

}  // namespace hcbm::ad
