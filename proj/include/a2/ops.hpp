#pragma once

#include "a2/tape.hpp"
#include "a2/tensor.hpp"

namespace a2 {

// Elementary differentiable operations. Every op takes an optional tape; a
// node is recorded when a tape is given and at least one input is tracked on
// it. Kernels accumulate sequentially per output element, so results are
// reproducible independent of thread count.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor, Tape<T>* tape = nullptr);

// Full reduction to a scalar of shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a, Tape<T>* tape = nullptr);

// Same buffer, new shape; gradient flows through unchanged.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape, Tape<T>* tape = nullptr);

// [n,p,q] -> [n,q,p].
template <typename T>
Tensor<T> transpose12(const Tensor<T>& a, Tape<T>* tape = nullptr);

// Batched matrix product: [n,p,q] x [n,q,r] -> [n,p,r].
template <typename T>
Tensor<T> matmul_batched(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

// Softmax along an axis, computed with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis, Tape<T>* tape = nullptr);

// Affine map: x[n,f] * w[k,f]^T + b[k] -> [n,k]. Bias may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 Tape<T>* tape = nullptr);

}  // namespace a2
