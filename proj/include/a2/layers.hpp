#pragma once

#include <memory>
#include <string>

#include "a2/ops.hpp"
#include "a2/rng.hpp"
#include "a2/tape.hpp"
#include "a2/tensor.hpp"

namespace a2 {

enum class Mode { Train, Eval };

// 2-d convolution descriptor. Padding is always kernel/2 ("same" at stride 1,
// halving at stride 2); groups is 1 (standard/pointwise) or in_channels
// (depthwise).
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;   // 1 or 3
  int stride = 1;   // 1 or 2
  int groups = 1;
  bool has_bias = false;

  int padding() const { return kernel / 2; }
  int out_extent(int in) const { return (in + 2 * padding() - kernel) / stride + 1; }
  void validate() const;

  static ConvSpec standard(int cin, int cout, int kernel, int stride, bool bias = false) {
    return ConvSpec{cin, cout, kernel, stride, 1, bias};
  }
  static ConvSpec pointwise(int cin, int cout, bool bias = false) {
    return ConvSpec{cin, cout, 1, 1, 1, bias};
  }
  static ConvSpec depthwise(int channels, int stride) {
    return ConvSpec{channels, channels, 3, stride, channels, false};
  }
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // (out, in/groups, k, k)
  Tensor<T> bias;    // (out) or undefined
};

// Cross-correlation with zero padding. Differentiable in x, weight and bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>* bias = nullptr, Tape<T>* tape = nullptr);

// conv2d restricted to groups == in_channels == out_channels.
template <typename T>
Tensor<T> depthwise_conv(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                         Tape<T>* tape = nullptr);

template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);

  static BatchNormState init(int channels) {
    BatchNormState s;
    s.gamma = Tensor<T>::full({channels}, T(1));
    s.beta = Tensor<T>({channels});
    s.running_mean = Tensor<T>({channels});
    s.running_var = Tensor<T>::full({channels}, T(1));
    return s;
  }
  int channels() const { return gamma.extent(0); }
};

// Train mode normalizes with batch statistics over (n,h,w) and updates the
// running stats in place; eval mode uses the running stats and never mutates.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormState<T>& state, Mode mode,
                    Tape<T>* tape = nullptr);

// min(max(x,0),6); subgradient 0 at both kinks.
template <typename T>
Tensor<T> relu6(const Tensor<T>& x, Tape<T>* tape = nullptr);

// [n,c,h,w] -> [n,c,1,1], mean over the spatial dims.
template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& x, Tape<T>* tape = nullptr);

// Inverted-scaling dropout; identity in eval mode or at rate 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng,
                  Tape<T>* tape = nullptr);

// Bottleneck block: pointwise expand (when expansion > 1) -> BN -> ReLU6 ->
// depthwise 3x3 -> BN -> ReLU6 -> [double attention] -> pointwise project ->
// BN (linear), plus an identity shortcut at stride 1 when channels match.
struct InvertedResidualSpec {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int expansion = 6;  // 1 or 6

  int expanded_channels() const { return expansion * in_channels; }
  bool use_shortcut() const { return stride == 1 && in_channels == out_channels; }
  void validate() const;
};

template <typename T>
struct DoubleAttentionParams;  // attention.hpp

template <typename T>
struct InvertedResidualParams {
  ConvParams<T> expand;  // weight undefined when expansion == 1
  BatchNormState<T> expand_bn;
  ConvParams<T> dw;
  BatchNormState<T> dw_bn;
  std::shared_ptr<DoubleAttentionParams<T>> attention;  // null for plain blocks
  ConvParams<T> project;
  BatchNormState<T> project_bn;
};

template <typename T>
Tensor<T> inverted_residual(const Tensor<T>& x, const InvertedResidualSpec& spec,
                            InvertedResidualParams<T>& params, Mode mode,
                            Tape<T>* tape = nullptr);

}  // namespace a2
