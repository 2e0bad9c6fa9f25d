#include "hcbm/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace hcbm::ad {

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
BasicTensor<T> sign(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out[i] = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
  }
  return out;
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi) {
  if (lo > hi) throw InvalidConfigError("clamp: lo > hi");
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::clamp(x[i], lo, hi);
  return out;
}

template <typename T>
BasicTensor<T> project_linf(const BasicTensor<T>& x_adv, const BasicTensor<T>& x_orig, T eps) {
  if (x_adv.shape() != x_orig.shape()) {
    throw ShapeError("project_linf: " + to_string(x_adv.shape()) + " vs " +
                     to_string(x_orig.shape()));
  }
  if (!(eps >= T(0))) throw InvalidConfigError("project_linf: epsilon must be >= 0");
  BasicTensor<T> out(x_adv.shape());
  for (std::size_t i = 0; i < x_adv.numel(); ++i) {
    // Bounds computed in the element type so |out - orig| <= eps holds
    // exactly after rounding.
    T lo = x_orig[i] - eps;
    T hi = x_orig[i] + eps;
    while (x_orig[i] - lo > eps) lo = std::nextafter(lo, x_orig[i]);
    while (hi - x_orig[i] > eps) hi = std::nextafter(hi, x_orig[i]);
    out[i] = std::isinf(eps) ? x_adv[i] : std::clamp(x_adv[i], lo, hi);
  }
  return out;
}

template <typename T>
double linf_distance(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("linf_distance: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

#define HCBM_INSTANTIATE(T)                                                          \
  template BasicTensor<T> sign(const BasicTensor<T>&);                               \
  template BasicTensor<T> clamp(const BasicTensor<T>&, T, T);                        \
  template BasicTensor<T> project_linf(const BasicTensor<T>&, const BasicTensor<T>&, \
                                       T);                                           \
  template double linf_distance(const BasicTensor<T>&, const BasicTensor<T>&);

HCBM_INSTANTIATE(float)
HCBM_INSTANTIATE(double)
#undef HCBM_INSTANTIATE

}  // namespace hcbm::ad
