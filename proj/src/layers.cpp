#include "a2/layers.hpp"

#include <algorithm>
#include <cmath>

#include "a2/attention.hpp"

namespace a2 {

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError("conv channels must be positive");
  }
  if (kernel != 1 && kernel != 3) {
    throw ConfigError("conv kernel must be 1 or 3, got " + std::to_string(kernel));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (groups != 1 && groups != in_channels) {
    throw ConfigError("conv groups must be 1 or in_channels");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("conv channels must be divisible by groups");
  }
}

void InvertedResidualSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError("inverted residual channels must be positive");
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("inverted residual stride must be 1 or 2");
  }
  if (expansion != 1 && expansion != 6) {
    throw ConfigError("inverted residual expansion must be 1 or 6");
  }
}

namespace {

// ---------------------------------------------------------------------------
// conv kernels. Each output element is accumulated sequentially by exactly
// one thread, so results do not depend on the thread count.
// ---------------------------------------------------------------------------

struct ConvDims {
  int n, cin, h, w;
  int cout, k, s, pad;
  int ho, wo;
  int cing;  // in channels per group
  int ocg;   // out channels per group
};

template <typename T>
void conv_forward_generic(const T* x, const T* wgt, const T* bias, T* y, const ConvDims& d) {
  const long long total = static_cast<long long>(d.n) * d.cout;
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < total; ++t) {
    const int ni = static_cast<int>(t / d.cout);
    const int oc = static_cast<int>(t % d.cout);
    const int g = oc / d.ocg;
    const T* xn = x + static_cast<std::size_t>(ni) * d.cin * d.h * d.w;
    const T* wk = wgt + static_cast<std::size_t>(oc) * d.cing * d.k * d.k;
    T* yp = y + (static_cast<std::size_t>(ni) * d.cout + oc) * d.ho * d.wo;
    const T b = bias ? bias[oc] : T(0);
    for (int oh = 0; oh < d.ho; ++oh) {
      const int ih0 = oh * d.s - d.pad;
      const int kh_lo = std::max(0, -ih0);
      const int kh_hi = std::min(d.k, d.h - ih0);
      for (int ow = 0; ow < d.wo; ++ow) {
        const int iw0 = ow * d.s - d.pad;
        const int kw_lo = std::max(0, -iw0);
        const int kw_hi = std::min(d.k, d.w - iw0);
        T acc = b;
        for (int icl = 0; icl < d.cing; ++icl) {
          const int ic = g * d.cing + icl;
          const T* xc = xn + static_cast<std::size_t>(ic) * d.h * d.w;
          const T* wc = wk + static_cast<std::size_t>(icl) * d.k * d.k;
          for (int kh = kh_lo; kh < kh_hi; ++kh) {
            const T* xrow = xc + static_cast<std::size_t>(ih0 + kh) * d.w + iw0;
            const T* wrow = wc + static_cast<std::size_t>(kh) * d.k;
            for (int kw = kw_lo; kw < kw_hi; ++kw) {
              acc += xrow[kw] * wrow[kw];
            }
          }
        }
        yp[static_cast<std::size_t>(oh) * d.wo + ow] = acc;
      }
    }
  }
}

// k==1, s==1, groups==1: per-channel axpy over the contiguous spatial plane.
template <typename T>
void conv_forward_pointwise(const T* x, const T* wgt, const T* bias, T* y, const ConvDims& d) {
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const long long total = static_cast<long long>(d.n) * d.cout;
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < total; ++t) {
    const int ni = static_cast<int>(t / d.cout);
    const int oc = static_cast<int>(t % d.cout);
    const T* xn = x + static_cast<std::size_t>(ni) * d.cin * hw;
    const T* wrow = wgt + static_cast<std::size_t>(oc) * d.cin;
    T* yp = y + (static_cast<std::size_t>(ni) * d.cout + oc) * hw;
    const T b = bias ? bias[oc] : T(0);
    for (std::size_t p = 0; p < hw; ++p) yp[p] = b;
    for (int ic = 0; ic < d.cin; ++ic) {
      const T wv = wrow[ic];
      const T* xc = xn + static_cast<std::size_t>(ic) * hw;
      for (std::size_t p = 0; p < hw; ++p) yp[p] += wv * xc[p];
    }
  }
}

template <typename T>
void conv_backward_input(const T* gy, const T* wgt, T* gx, const ConvDims& d) {
  const long long total = static_cast<long long>(d.n) * d.cin;
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < total; ++t) {
    const int ni = static_cast<int>(t / d.cin);
    const int ic = static_cast<int>(t % d.cin);
    const int g = ic / d.cing;
    const int icl = ic % d.cing;
    T* gxc = gx + (static_cast<std::size_t>(ni) * d.cin + ic) * d.h * d.w;
    const T* gyn = gy + static_cast<std::size_t>(ni) * d.cout * d.ho * d.wo;
    for (int ih = 0; ih < d.h; ++ih) {
      for (int iw = 0; iw < d.w; ++iw) {
        T acc = T(0);
        for (int ocl = 0; ocl < d.ocg; ++ocl) {
          const int oc = g * d.ocg + ocl;
          const T* gyc = gyn + static_cast<std::size_t>(oc) * d.ho * d.wo;
          const T* wc = wgt + (static_cast<std::size_t>(oc) * d.cing + icl) * d.k * d.k;
          for (int kh = 0; kh < d.k; ++kh) {
            const int num_h = ih + d.pad - kh;
            if (num_h % d.s != 0) continue;
            const int oh = num_h / d.s;
            if (oh < 0 || oh >= d.ho) continue;
            for (int kw = 0; kw < d.k; ++kw) {
              const int num_w = iw + d.pad - kw;
              if (num_w % d.s != 0) continue;
              const int ow = num_w / d.s;
              if (ow < 0 || ow >= d.wo) continue;
              acc += gyc[static_cast<std::size_t>(oh) * d.wo + ow] *
                     wc[static_cast<std::size_t>(kh) * d.k + kw];
            }
          }
        }
        gxc[static_cast<std::size_t>(ih) * d.w + iw] += acc;
      }
    }
  }
}

template <typename T>
void conv_backward_weight(const T* gy, const T* x, T* gw, const ConvDims& d) {
#pragma omp parallel for schedule(static)
  for (long long oc = 0; oc < static_cast<long long>(d.cout); ++oc) {
    const int g = static_cast<int>(oc) / d.ocg;
    T* gwc = gw + static_cast<std::size_t>(oc) * d.cing * d.k * d.k;
    for (int icl = 0; icl < d.cing; ++icl) {
      const int ic = g * d.cing + icl;
      for (int kh = 0; kh < d.k; ++kh) {
        for (int kw = 0; kw < d.k; ++kw) {
          T acc = T(0);
          for (int ni = 0; ni < d.n; ++ni) {
            const T* gyc = gy + (static_cast<std::size_t>(ni) * d.cout + oc) * d.ho * d.wo;
            const T* xc = x + (static_cast<std::size_t>(ni) * d.cin + ic) * d.h * d.w;
            for (int oh = 0; oh < d.ho; ++oh) {
              const int ih = oh * d.s + kh - d.pad;
              if (ih < 0 || ih >= d.h) continue;
              for (int ow = 0; ow < d.wo; ++ow) {
                const int iw = ow * d.s + kw - d.pad;
                if (iw < 0 || iw >= d.w) continue;
                acc += gyc[static_cast<std::size_t>(oh) * d.wo + ow] *
                       xc[static_cast<std::size_t>(ih) * d.w + iw];
              }
            }
          }
          gwc[(static_cast<std::size_t>(icl) * d.k + kh) * d.k + kw] += acc;
        }
      }
    }
  }
}

template <typename T>
void conv_backward_bias(const T* gy, T* gb, const ConvDims& d) {
#pragma omp parallel for schedule(static)
  for (long long oc = 0; oc < static_cast<long long>(d.cout); ++oc) {
    T acc = T(0);
    for (int ni = 0; ni < d.n; ++ni) {
      const T* gyc = gy + (static_cast<std::size_t>(ni) * d.cout + oc) * d.ho * d.wo;
      const std::size_t hw = static_cast<std::size_t>(d.ho) * d.wo;
      for (std::size_t p = 0; p < hw; ++p) acc += gyc[p];
    }
    gb[oc] += acc;
  }
}

ConvDims make_dims(const Shape& xs, const ConvSpec& spec) {
  ConvDims d;
  d.n = xs[0];
  d.cin = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.cout = spec.out_channels;
  d.k = spec.kernel;
  d.s = spec.stride;
  d.pad = spec.padding();
  d.ho = spec.out_extent(d.h);
  d.wo = spec.out_extent(d.w);
  d.cing = spec.in_channels / spec.groups;
  d.ocg = spec.out_channels / spec.groups;
  return d;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>* bias, Tape<T>* tape) {
  spec.validate();
  if (x.rank() != 4) throw ShapeError("conv2d input must be rank 4, got " + shape_str(x.shape()));
  if (x.extent(1) != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(x.extent(1)) + " channels, spec wants " +
                     std::to_string(spec.in_channels));
  }
  const Shape want_w = {spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel};
  if (weight.shape() != want_w) {
    throw ShapeError("conv2d: weight shape " + shape_str(weight.shape()) + ", expected " +
                     shape_str(want_w));
  }
  const bool with_bias = bias && bias->defined();
  if (spec.has_bias != with_bias) {
    throw ShapeError("conv2d: bias presence does not match spec");
  }
  if (with_bias && bias->shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias->shape()));
  }

  const ConvDims d = make_dims(x.shape(), spec);
  if (d.ho < 1 || d.wo < 1) {
    throw ShapeError("conv2d: output would be empty for input " + shape_str(x.shape()));
  }
  Tensor<T> out({d.n, d.cout, d.ho, d.wo});
  const T* bias_ptr = with_bias ? bias->data() : nullptr;
  if (d.k == 1 && d.s == 1 && spec.groups == 1) {
    conv_forward_pointwise(x.data(), weight.data(), bias_ptr, out.data(), d);
  } else {
    conv_forward_generic(x.data(), weight.data(), bias_ptr, out.data(), d);
  }

  const bool track_x = tape && tape->tracks(x);
  const bool track_w = tape && tape->tracks(weight);
  const bool track_b = tape && with_bias && tape->tracks(*bias);
  if (track_x || track_w || track_b) {
    const int ix = track_x ? x.tape_id : -1;
    const int iw = track_w ? weight.tape_id : -1;
    const int ib = track_b ? bias->tape_id : -1;
    const int io = tape->track(out);
    Tensor<T> xc = x;       // shallow
    Tensor<T> wc = weight;  // shallow
    tape->record([ix, iw, ib, io, xc, wc, d](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      if (ix >= 0) conv_backward_input(g->data(), wc.data(), t.grad_slot(ix).data(), d);
      if (iw >= 0) conv_backward_weight(g->data(), xc.data(), t.grad_slot(iw).data(), d);
      if (ib >= 0) conv_backward_bias(g->data(), t.grad_slot(ib).data(), d);
    });
  }
  return out;
}

template <typename T>
Tensor<T> depthwise_conv(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                         Tape<T>* tape) {
  if (spec.groups != spec.in_channels || spec.in_channels != spec.out_channels) {
    throw ConfigError("depthwise_conv requires groups == in_channels == out_channels");
  }
  return conv2d<T>(x, spec, weight, nullptr, tape);
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormState<T>& state, Mode mode, Tape<T>* tape) {
  if (x.rank() != 4) throw ShapeError("batchnorm input must be rank 4, got " + shape_str(x.shape()));
  const int c = x.extent(1);
  if (c != state.channels()) {
    throw ShapeError("batchnorm: input has " + std::to_string(c) + " channels, state has " +
                     std::to_string(state.channels()));
  }
  const int n = x.extent(0), h = x.extent(2), w = x.extent(3);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t m = static_cast<std::size_t>(n) * hw;

  Tensor<T> out(x.shape());
  Tensor<T> mean_t({c});
  Tensor<T> rstd_t({c});
  const T* px = x.data();
  T* po = out.data();

  if (mode == Mode::Train) {
    if (m <= 1) {
      throw ContractError("batchnorm train mode needs n*h*w >= 2, got " + std::to_string(m));
    }
#pragma omp parallel for schedule(static)
    for (long long ci = 0; ci < static_cast<long long>(c); ++ci) {
      const std::size_t cc = static_cast<std::size_t>(ci);
      T s = T(0);
      for (int ni = 0; ni < n; ++ni) {
        const T* xc = px + (static_cast<std::size_t>(ni) * c + cc) * hw;
        for (std::size_t p = 0; p < hw; ++p) s += xc[p];
      }
      const T mean = s / static_cast<T>(m);
      T v = T(0);
      for (int ni = 0; ni < n; ++ni) {
        const T* xc = px + (static_cast<std::size_t>(ni) * c + cc) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
          const T dlt = xc[p] - mean;
          v += dlt * dlt;
        }
      }
      const T var = v / static_cast<T>(m);
      const T rstd = T(1) / std::sqrt(var + state.epsilon);
      const T gamma = state.gamma.data()[cc];
      const T beta = state.beta.data()[cc];
      for (int ni = 0; ni < n; ++ni) {
        const T* xc = px + (static_cast<std::size_t>(ni) * c + cc) * hw;
        T* oc = po + (static_cast<std::size_t>(ni) * c + cc) * hw;
        for (std::size_t p = 0; p < hw; ++p) oc[p] = gamma * (xc[p] - mean) * rstd + beta;
      }
      mean_t.data()[cc] = mean;
      rstd_t.data()[cc] = rstd;
      // running stats blend with the unbiased batch variance
      const T var_unbiased = var * static_cast<T>(m) / static_cast<T>(m - 1);
      state.running_mean.data()[cc] =
          (T(1) - state.momentum) * state.running_mean.data()[cc] + state.momentum * mean;
      state.running_var.data()[cc] =
          (T(1) - state.momentum) * state.running_var.data()[cc] + state.momentum * var_unbiased;
    }
  } else {
#pragma omp parallel for schedule(static)
    for (long long ci = 0; ci < static_cast<long long>(c); ++ci) {
      const std::size_t cc = static_cast<std::size_t>(ci);
      const T mean = state.running_mean.data()[cc];
      const T rstd = T(1) / std::sqrt(state.running_var.data()[cc] + state.epsilon);
      const T gamma = state.gamma.data()[cc];
      const T beta = state.beta.data()[cc];
      for (int ni = 0; ni < n; ++ni) {
        const T* xc = px + (static_cast<std::size_t>(ni) * c + cc) * hw;
        T* oc = po + (static_cast<std::size_t>(ni) * c + cc) * hw;
        for (std::size_t p = 0; p < hw; ++p) oc[p] = gamma * (xc[p] - mean) * rstd + beta;
      }
      mean_t.data()[cc] = mean;
      rstd_t.data()[cc] = rstd;
    }
  }

  const bool track_x = tape && tape->tracks(x);
  const bool track_g = tape && tape->tracks(state.gamma);
  const bool track_b = tape && tape->tracks(state.beta);
  if (track_x || track_g || track_b) {
    const int ix = track_x ? x.tape_id : -1;
    const int ig = track_g ? state.gamma.tape_id : -1;
    const int ib = track_b ? state.beta.tape_id : -1;
    const int io = tape->track(out);
    Tensor<T> xc = x;
    Tensor<T> gamma = state.gamma;
    const bool train = (mode == Mode::Train);
    tape->record([ix, ig, ib, io, xc, gamma, mean_t, rstd_t, n, c, hw, m, train](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      const T* pg = g->data();
      const T* px2 = xc.data();
      T* gx = ix >= 0 ? t.grad_slot(ix).data() : nullptr;
      T* gg = ig >= 0 ? t.grad_slot(ig).data() : nullptr;
      T* gb = ib >= 0 ? t.grad_slot(ib).data() : nullptr;
#pragma omp parallel for schedule(static)
      for (long long ci = 0; ci < static_cast<long long>(c); ++ci) {
        const std::size_t cc = static_cast<std::size_t>(ci);
        const T mean = mean_t.data()[cc];
        const T rstd = rstd_t.data()[cc];
        const T gm = gamma.data()[cc];
        T sum_gy = T(0), sum_gyxh = T(0);
        for (int ni = 0; ni < n; ++ni) {
          const std::size_t base = (static_cast<std::size_t>(ni) * c + cc) * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            const T xh = (px2[base + p] - mean) * rstd;
            sum_gy += pg[base + p];
            sum_gyxh += pg[base + p] * xh;
          }
        }
        if (gg) gg[cc] += sum_gyxh;
        if (gb) gb[cc] += sum_gy;
        if (gx) {
          if (train) {
            const T inv_m = T(1) / static_cast<T>(m);
            for (int ni = 0; ni < n; ++ni) {
              const std::size_t base = (static_cast<std::size_t>(ni) * c + cc) * hw;
              for (std::size_t p = 0; p < hw; ++p) {
                const T xh = (px2[base + p] - mean) * rstd;
                gx[base + p] +=
                    gm * rstd * (pg[base + p] - sum_gy * inv_m - xh * sum_gyxh * inv_m);
              }
            }
          } else {
            for (int ni = 0; ni < n; ++ni) {
              const std::size_t base = (static_cast<std::size_t>(ni) * c + cc) * hw;
              for (std::size_t p = 0; p < hw; ++p) gx[base + p] += gm * rstd * pg[base + p];
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu6(const Tensor<T>& x, Tape<T>* tape) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    po[i] = std::min(std::max(px[i], T(0)), T(6));
  }
  if (tape && tape->tracks(x)) {
    const int ix = x.tape_id;
    const int io = tape->track(out);
    Tensor<T> xc = x;
    tape->record([ix, io, xc](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      T* d = t.grad_slot(ix).data();
      const T* pg = g->data();
      const T* px2 = xc.data();
      const std::size_t m = g->size();
      for (std::size_t i = 0; i < m; ++i) {
        if (px2[i] > T(0) && px2[i] < T(6)) d[i] += pg[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& x, Tape<T>* tape) {
  if (x.rank() != 4) throw ShapeError("global_avgpool input must be rank 4");
  const int n = x.extent(0), c = x.extent(1);
  const std::size_t hw = static_cast<std::size_t>(x.extent(2)) * x.extent(3);
  Tensor<T> out({n, c, 1, 1});
  const T* px = x.data();
  T* po = out.data();
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* xc = px + (static_cast<std::size_t>(ni) * c + ci) * hw;
      T s = T(0);
      for (std::size_t p = 0; p < hw; ++p) s += xc[p];
      po[static_cast<std::size_t>(ni) * c + ci] = s / static_cast<T>(hw);
    }
  }
  if (tape && tape->tracks(x)) {
    const int ix = x.tape_id;
    const int io = tape->track(out);
    tape->record([ix, io, n, c, hw](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      T* d = t.grad_slot(ix).data();
      const T* pg = g->data();
      const T inv = T(1) / static_cast<T>(hw);
      for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
          const T gv = pg[static_cast<std::size_t>(ni) * c + ci] * inv;
          T* dc = d + (static_cast<std::size_t>(ni) * c + ci) * hw;
          for (std::size_t p = 0; p < hw; ++p) dc[p] += gv;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng, Tape<T>* tape) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::Eval || rate == 0.0) return x;

  Tensor<T> mask(x.shape());
  const T keep_scale = T(1.0 / (1.0 - rate));
  T* pm = mask.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    pm[i] = (rng.uniform() >= rate) ? keep_scale : T(0);
  }
  return mul(x, mask, tape);
}

template <typename T>
Tensor<T> inverted_residual(const Tensor<T>& x, const InvertedResidualSpec& spec,
                            InvertedResidualParams<T>& params, Mode mode, Tape<T>* tape) {
  spec.validate();
  if (x.extent(1) != spec.in_channels) {
    throw ShapeError("inverted_residual: input has " + std::to_string(x.extent(1)) +
                     " channels, spec wants " + std::to_string(spec.in_channels));
  }
  if (params.attention && spec.stride != 1) {
    throw ConfigError("double attention requires stride 1");
  }

  Tensor<T> u = x;
  const int c_exp = spec.expanded_channels();
  if (spec.expansion > 1) {
    u = conv2d<T>(u, ConvSpec::pointwise(spec.in_channels, c_exp), params.expand.weight, nullptr, tape);
    u = batchnorm(u, params.expand_bn, mode, tape);
    u = relu6(u, tape);
  }
  u = conv2d<T>(u, ConvSpec::depthwise(c_exp, spec.stride), params.dw.weight, nullptr, tape);
  u = batchnorm(u, params.dw_bn, mode, tape);
  u = relu6(u, tape);
  if (params.attention) {
    u = double_attention(u, *params.attention, tape);
  }
  u = conv2d<T>(u, ConvSpec::pointwise(c_exp, spec.out_channels), params.project.weight, nullptr, tape);
  u = batchnorm(u, params.project_bn, mode, tape);
  if (spec.use_shortcut()) {
    u = add(x, u, tape);
  }
  return u;
}

#define A2_INSTANTIATE_LAYERS(T)                                                               \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,            \
                               const Tensor<T>*, Tape<T>*);                                    \
  template Tensor<T> depthwise_conv<T>(const Tensor<T>&, const ConvSpec&, const Tensor<T>&,    \
                                       Tape<T>*);                                              \
  template Tensor<T> batchnorm<T>(const Tensor<T>&, BatchNormState<T>&, Mode, Tape<T>*);       \
  template Tensor<T> relu6<T>(const Tensor<T>&, Tape<T>*);                                     \
  template Tensor<T> global_avgpool<T>(const Tensor<T>&, Tape<T>*);                            \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Mode, Rng&, Tape<T>*);               \
  template Tensor<T> inverted_residual<T>(const Tensor<T>&, const InvertedResidualSpec&,       \
                                          InvertedResidualParams<T>&, Mode, Tape<T>*);

A2_INSTANTIATE_LAYERS(float)
A2_INSTANTIATE_LAYERS(double)

#undef A2_INSTANTIATE_LAYERS

}  // namespace a2
