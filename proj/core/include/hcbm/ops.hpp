#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hcbm/tape.hpp"

namespace hcbm::ad {

enum class Mode { train, eval };

// Every op records its output on the tape of its first argument. Shape
// mismatches raise ShapeError naming both shapes.

template <typename T>
BasicVar<T> add(BasicVar<T> a, BasicVar<T> b);

template <typename T>
BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b);

template <typename T>
BasicVar<T> scale(BasicVar<T> a, T factor);

/// Sum of all elements, accumulated in double. Output shape {1}.
template <typename T>
BasicVar<T> sum(BasicVar<T> a);

template <typename T>
BasicVar<T> mean(BasicVar<T> a);

template <typename T>
BasicVar<T> relu(BasicVar<T> a);

template <typename T>
BasicVar<T> sigmoid(BasicVar<T> a);

/// Forward: 1 where p > 0.5, else 0. Backward: identity (straight-through).
template <typename T>
BasicVar<T> threshold_ste(BasicVar<T> probabilities);

/// Inverted dropout: scales kept units by 1/(1-p) in train mode, identity in
/// eval mode or when p == 0.
template <typename T>
BasicVar<T> dropout(BasicVar<T> a, double p, Mode mode, std::mt19937_64& rng);

/// Concatenation along `axis`; all other dimensions must agree.
template <typename T>
BasicVar<T> concat(std::span<const BasicVar<T>> parts, std::size_t axis);

template <typename T>
BasicVar<T> reshape(BasicVar<T> a, Shape shape);

/// [B, ...] -> [B, prod(...)].
template <typename T>
BasicVar<T> flatten(BasicVar<T> a);

/// x [B, in] * weight[out, in]^T + bias[out] -> [B, out].
template <typename T>
BasicVar<T> linear(BasicVar<T> x, BasicVar<T> weight, BasicVar<T> bias);

/// x [B, C, H, W], kernel [O, C, K, K] with K odd, bias [O]. Stride 1 and
/// zero "same" padding, so the spatial size is preserved.
template <typename T>
BasicVar<T> conv2d(BasicVar<T> x, BasicVar<T> kernel, BasicVar<T> bias);

/// Non-overlapping window x window max pooling; trailing rows/cols dropped.
template <typename T>
BasicVar<T> maxpool2d(BasicVar<T> x, std::size_t window = 2);

/// [B, C, H, W] -> [B, C].
template <typename T>
BasicVar<T> global_avg_pool(BasicVar<T> x);

/// Mean softmax cross entropy over the batch. logits [B, P].
template <typename T>
BasicVar<T> softmax_cross_entropy(BasicVar<T> logits, std::span<const int> labels);

/// Mean binary cross entropy on logits over all B*K elements.
template <typename T>
BasicVar<T> binary_cross_entropy(BasicVar<T> logits, const BasicTensor<T>& targets);

}  // namespace hcbm::ad
