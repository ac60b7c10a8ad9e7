#include "a2/attention.hpp"

namespace a2 {

void DoubleAttentionSpec::validate() const {
  if (c_exp < 1 || r1 < 1 || r2 < 1) {
    throw ConfigError("double attention: channels and ratios must be positive");
  }
  if (c_exp % r1 != 0 || c_exp % r2 != 0) {
    throw ConfigError("double attention: c_exp=" + std::to_string(c_exp) +
                      " not divisible by ratios r1=" + std::to_string(r1) +
                      ", r2=" + std::to_string(r2));
  }
}

template <typename T>
Tensor<T> gather(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  if (a.rank() != 4 || b.rank() != 4) {
    throw ShapeError("gather expects rank-4 inputs");
  }
  if (a.extent(0) != b.extent(0)) {
    throw ShapeError("gather: batch mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  if (a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3)) {
    throw ShapeError("gather: spatial mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int n = a.extent(0);
  const int cm = a.extent(1);
  const int cn = b.extent(1);
  const int hw = a.extent(2) * a.extent(3);
  Tensor<T> a_flat = reshape(a, {n, cm, hw}, tape);
  Tensor<T> b_flat = reshape(b, {n, cn, hw}, tape);
  Tensor<T> b_soft = softmax(b_flat, 2, tape);  // attention over positions
  return matmul_batched(a_flat, transpose12(b_soft, tape), tape);
}

template <typename T>
Tensor<T> distribute(const Tensor<T>& g, const Tensor<T>& v, Tape<T>* tape) {
  if (g.rank() != 3 || v.rank() != 4) {
    throw ShapeError("distribute expects g rank 3 and v rank 4");
  }
  if (g.extent(0) != v.extent(0)) {
    throw ShapeError("distribute: batch mismatch");
  }
  if (g.extent(2) != v.extent(1)) {
    throw ShapeError("distribute: inner extent " + std::to_string(g.extent(2)) +
                     " does not match v channels " + std::to_string(v.extent(1)));
  }
  const int n = v.extent(0);
  const int cn = v.extent(1);
  const int h = v.extent(2), w = v.extent(3);
  Tensor<T> v_flat = reshape(v, {n, cn, h * w}, tape);
  Tensor<T> v_soft = softmax(v_flat, 1, tape);  // selection weights per position
  Tensor<T> z_flat = matmul_batched(g, v_soft, tape);
  return reshape(z_flat, {n, g.extent(1), h, w}, tape);
}

template <typename T>
Tensor<T> double_attention(const Tensor<T>& u, const DoubleAttentionParams<T>& params,
                           Tape<T>* tape) {
  const DoubleAttentionSpec& spec = params.spec;
  spec.validate();
  if (u.rank() != 4 || u.extent(1) != spec.c_exp) {
    throw ShapeError("double_attention: input " + shape_str(u.shape()) + " does not carry c_exp=" +
                     std::to_string(spec.c_exp) + " channels");
  }
  Tensor<T> a = conv2d(u, ConvSpec::pointwise(spec.c_exp, spec.c_m(), true),
                       params.theta.weight, &params.theta.bias, tape);
  Tensor<T> b = conv2d(u, ConvSpec::pointwise(spec.c_exp, spec.c_n(), true),
                       params.phi.weight, &params.phi.bias, tape);
  Tensor<T> v = conv2d(u, ConvSpec::pointwise(spec.c_exp, spec.c_n(), true),
                       params.rho.weight, &params.rho.bias, tape);
  Tensor<T> z = distribute(gather(a, b, tape), v, tape);
  Tensor<T> delta = conv2d(z, ConvSpec::pointwise(spec.c_m(), spec.c_exp, true),
                           params.out.weight, &params.out.bias, tape);
  return add(u, delta, tape);
}

template <typename T>
Tensor<T> attended_inverted_residual(const Tensor<T>& x, const InvertedResidualSpec& spec,
                                     InvertedResidualParams<T>& params, Mode mode, Tape<T>* tape) {
  if (!params.attention) {
    throw ConfigError("attended_inverted_residual: attention params missing");
  }
  if (spec.stride != 1) {
    throw ConfigError("attended_inverted_residual: stride must be 1");
  }
  return inverted_residual(x, spec, params, mode, tape);
}

#define A2_INSTANTIATE_ATTENTION(T)                                                        \
  template Tensor<T> gather<T>(const Tensor<T>&, const Tensor<T>&, Tape<T>*);              \
  template Tensor<T> distribute<T>(const Tensor<T>&, const Tensor<T>&, Tape<T>*);          \
  template Tensor<T> double_attention<T>(const Tensor<T>&, const DoubleAttentionParams<T>&,\
                                         Tape<T>*);                                        \
  template Tensor<T> attended_inverted_residual<T>(const Tensor<T>&,                       \
                                                   const InvertedResidualSpec&,            \
                                                   InvertedResidualParams<T>&, Mode,       \
                                                   Tape<T>*);

A2_INSTANTIATE_ATTENTION(float)
A2_INSTANTIATE_ATTENTION(double)

#undef A2_INSTANTIATE_ATTENTION

}  // namespace a2
