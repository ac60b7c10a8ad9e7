#pragma once

#include "a2/layers.hpp"
#include "a2/ops.hpp"
#include "a2/tape.hpp"
#include "a2/tensor.hpp"

namespace a2 {

// Aggregation/propagation double attention. Three 1x1 convs produce the
// feature map A, the attention maps B and the distribution weights V from the
// expanded map U; global descriptors are pooled as G = A_flat * softmax(B)^T
// (softmax over positions) and re-dispersed as Z = G * softmax(V) (softmax
// over the c_n channels per position). The module output is
// U + W_out(Z), so zero weights make it an exact identity.
struct DoubleAttentionSpec {
  int c_exp = 0;  // channel count at the attachment point
  int r1 = 6;
  int r2 = 6;

  int c_m() const { return c_exp / r1; }
  int c_n() const { return c_exp / r2; }
  void validate() const;
};

template <typename T>
struct DoubleAttentionParams {
  DoubleAttentionSpec spec;
  ConvParams<T> theta;  // c_exp -> c_m, produces A
  ConvParams<T> phi;    // c_exp -> c_n, produces B
  ConvParams<T> rho;    // c_exp -> c_n, produces V
  ConvParams<T> out;    // c_m -> c_exp
};

// Second-order attention pooling: [n,c_m,h,w] x [n,c_n,h,w] -> [n,c_m,c_n].
template <typename T>
Tensor<T> gather(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

// Descriptor distribution: [n,c_m,c_n] x [n,c_n,h,w] -> [n,c_m,h,w].
template <typename T>
Tensor<T> distribute(const Tensor<T>& g, const Tensor<T>& v, Tape<T>* tape = nullptr);

// Full module: shape-preserving on [n,c_exp,h,w].
template <typename T>
Tensor<T> double_attention(const Tensor<T>& u, const DoubleAttentionParams<T>& params,
                           Tape<T>* tape = nullptr);

// Inverted residual with the attention module after the depthwise stage;
// requires spec.stride == 1 and params.attention set.
template <typename T>
Tensor<T> attended_inverted_residual(const Tensor<T>& x, const InvertedResidualSpec& spec,
                                     InvertedResidualParams<T>& params, Mode mode,
                                     Tape<T>* tape = nullptr);

}  // namespace a2
