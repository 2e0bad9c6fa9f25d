#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "hcbm/error.hpp"

namespace hcbm::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major n-dimensional array. Plain value type; differentiation
/// lives on the tape, not here.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor of shape " + to_string(shape_) + " given " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, std::vector<T>{v}); }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
  [[nodiscard]] std::size_t numel() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same buffer, new shape; the element count must not change.
  [[nodiscard]] BasicTensor reshaped(Shape shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  [[nodiscard]] BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

// Non-differentiable elementwise helpers used by the attacks.

/// -1, 0 or +1 per element; sign(0) == 0.
template <typename T>
BasicTensor<T> sign(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi);

/// Clips every element of x_adv into [x_orig - eps, x_orig + eps].
template <typename T>
BasicTensor<T> project_linf(const BasicTensor<T>& x_adv, const BasicTensor<T>& x_orig, T eps);

/// max_i |a_i - b_i| accumulated in double.
template <typename T>
double linf_distance(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace hcbm::ad
