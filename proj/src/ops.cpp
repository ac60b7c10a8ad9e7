#include "a2/ops.hpp"

#include <algorithm>
#include <cmath>

namespace a2 {

namespace {

template <typename T>
bool any_tracked(Tape<T>* tape, const Tensor<T>& a) {
  return tape && tape->tracks(a);
}

template <typename T>
bool any_tracked(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return tape && (tape->tracks(a) || tape->tracks(b));
}

template <typename T>
int id_or_minus1(Tape<T>* tape, const Tensor<T>& t) {
  return tape->tracks(t) ? t.tape_id : -1;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

// Decomposes a shape around an axis into (outer, extent, inner) so that the
// linear index is (o * extent + k) * inner + i.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  s.extent = static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]);
  for (int d = 0; d < axis; ++d) s.outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
  for (int d = axis + 1; d < static_cast<int>(shape.size()); ++d) {
    s.inner *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
  }
  return s;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  check_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];

  if (any_tracked(tape, a, b)) {
    const int ia = id_or_minus1(tape, a), ib = id_or_minus1(tape, b);
    const int io = tape->track(out);
    tape->record([ia, ib, io](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      if (ia >= 0) accumulate(t.grad_slot(ia), *g);
      if (ib >= 0) accumulate(t.grad_slot(ib), *g);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  check_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];

  if (any_tracked(tape, a, b)) {
    const int ia = id_or_minus1(tape, a), ib = id_or_minus1(tape, b);
    const int io = tape->track(out);
    tape->record([ia, ib, io, a, b](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      const std::size_t m = g->size();
      if (ia >= 0) {
        T* d = t.grad_slot(ia).data();
        for (std::size_t i = 0; i < m; ++i) d[i] += g->data()[i] * b.data()[i];
      }
      if (ib >= 0) {
        T* d = t.grad_slot(ib).data();
        for (std::size_t i = 0; i < m; ++i) d[i] += g->data()[i] * a.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor, Tape<T>* tape) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * factor;

  if (any_tracked(tape, a)) {
    const int ia = a.tape_id;
    const int io = tape->track(out);
    tape->record([ia, io, factor](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      T* d = t.grad_slot(ia).data();
      const std::size_t m = g->size();
      for (std::size_t i = 0; i < m; ++i) d[i] += g->data()[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a, Tape<T>* tape) {
  T acc = T(0);
  const T* pa = a.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) acc += pa[i];
  Tensor<T> out = Tensor<T>::scalar_of(acc);

  if (any_tracked(tape, a)) {
    const int ia = a.tape_id;
    const int io = tape->track(out);
    const std::size_t m = n;
    tape->record([ia, io, m](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      const T gv = g->data()[0];
      T* d = t.grad_slot(ia).data();
      for (std::size_t i = 0; i < m; ++i) d[i] += gv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape, Tape<T>* tape) {
  Tensor<T> out = a.reshaped(std::move(new_shape));
  out.tape_id = -1;
  out.tape_epoch = 0;
  if (any_tracked(tape, a)) {
    const int ia = a.tape_id;
    const int io = tape->track(out);
    tape->record([ia, io](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      accumulate(t.grad_slot(ia), *g);  // same layout, flat copy
    });
  }
  return out;
}

namespace {

template <typename T>
void transpose12_kernel(const T* src, T* dst, std::size_t n, std::size_t p, std::size_t q) {
  for (std::size_t b = 0; b < n; ++b) {
    const T* s = src + b * p * q;
    T* d = dst + b * p * q;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < q; ++j) {
        d[j * p + i] = s[i * q + j];
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> transpose12(const Tensor<T>& a, Tape<T>* tape) {
  if (a.rank() != 3) throw ShapeError("transpose12 expects rank 3, got " + shape_str(a.shape()));
  const std::size_t n = static_cast<std::size_t>(a.extent(0));
  const std::size_t p = static_cast<std::size_t>(a.extent(1));
  const std::size_t q = static_cast<std::size_t>(a.extent(2));
  Tensor<T> out({a.extent(0), a.extent(2), a.extent(1)});
  transpose12_kernel(a.data(), out.data(), n, p, q);

  if (any_tracked(tape, a)) {
    const int ia = a.tape_id;
    const int io = tape->track(out);
    tape->record([ia, io, n, p, q](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      Tensor<T> gt({static_cast<int>(n), static_cast<int>(p), static_cast<int>(q)});
      transpose12_kernel(g->data(), gt.data(), n, q, p);
      accumulate(t.grad_slot(ia), gt);
    });
  }
  return out;
}

namespace {

// c[p,r] += a[p,q] * b[q,r] for one batch element, sequential in q per output.
template <typename T>
void matmul_one(const T* a, const T* b, T* c, std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < q; ++k) acc += a[i * q + k] * b[k * r + j];
      c[i * r + j] += acc;
    }
  }
}

// c[p,r] += a[p,q] * b[r,q]^T
template <typename T>
void matmul_one_nt(const T* a, const T* b, T* c, std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < q; ++k) acc += a[i * q + k] * b[j * q + k];
      c[i * r + j] += acc;
    }
  }
}

// c[q,r] += a[p,q]^T * b[p,r]
template <typename T>
void matmul_one_tn(const T* a, const T* b, T* c, std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < p; ++k) acc += a[k * q + i] * b[k * r + j];
      c[i * r + j] += acc;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul_batched(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  if (a.rank() != 3 || b.rank() != 3) {
    throw ShapeError("matmul_batched expects rank-3 inputs, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(1)) {
    throw ShapeError("matmul_batched: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t n = static_cast<std::size_t>(a.extent(0));
  const std::size_t p = static_cast<std::size_t>(a.extent(1));
  const std::size_t q = static_cast<std::size_t>(a.extent(2));
  const std::size_t r = static_cast<std::size_t>(b.extent(2));
  Tensor<T> out({a.extent(0), a.extent(1), b.extent(2)});
#pragma omp parallel for schedule(static)
  for (long long bi = 0; bi < static_cast<long long>(n); ++bi) {
    const std::size_t bb = static_cast<std::size_t>(bi);
    matmul_one(a.data() + bb * p * q, b.data() + bb * q * r, out.data() + bb * p * r, p, q, r);
  }

  if (any_tracked(tape, a, b)) {
    const int ia = id_or_minus1(tape, a), ib = id_or_minus1(tape, b);
    const int io = tape->track(out);
    tape->record([ia, ib, io, a, b, n, p, q, r](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      if (ia >= 0) {
        // dA = dC * B^T
        Tensor<T>& ga = t.grad_slot(ia);
        for (std::size_t bb = 0; bb < n; ++bb) {
          matmul_one_nt(g->data() + bb * p * r, b.data() + bb * q * r, ga.data() + bb * p * q, p, r, q);
        }
      }
      if (ib >= 0) {
        // dB = A^T * dC
        Tensor<T>& gb = t.grad_slot(ib);
        for (std::size_t bb = 0; bb < n; ++bb) {
          matmul_one_tn(a.data() + bb * p * q, g->data() + bb * p * r, gb.data() + bb * q * r, p, q, r);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis, Tape<T>* tape) {
  if (axis < 0 || axis >= x.rank()) {
    throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const long long slices = static_cast<long long>(s.outer * s.inner);
#pragma omp parallel for schedule(static)
  for (long long sl = 0; sl < slices; ++sl) {
    const std::size_t o = static_cast<std::size_t>(sl) / s.inner;
    const std::size_t in = static_cast<std::size_t>(sl) % s.inner;
    const std::size_t base = o * s.extent * s.inner + in;
    T mx = px[base];
    for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, px[base + k * s.inner]);
    T denom = T(0);
    for (std::size_t k = 0; k < s.extent; ++k) {
      const T e = std::exp(px[base + k * s.inner] - mx);
      po[base + k * s.inner] = e;
      denom += e;
    }
    for (std::size_t k = 0; k < s.extent; ++k) po[base + k * s.inner] /= denom;
  }

  if (any_tracked(tape, x)) {
    const int ix = x.tape_id;
    const int io = tape->track(out);
    tape->record([ix, io, out, s](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      // dx = y .* (dy - sum(dy .* y) along axis)
      Tensor<T>& gx = t.grad_slot(ix);
      const T* py = out.data();
      const T* pg = g->data();
      T* pd = gx.data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          T dot = T(0);
          for (std::size_t k = 0; k < s.extent; ++k) {
            const std::size_t idx = base + k * s.inner;
            dot += pg[idx] * py[idx];
          }
          for (std::size_t k = 0; k < s.extent; ++k) {
            const std::size_t idx = base + k * s.inner;
            pd[idx] += py[idx] * (pg[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tape<T>* tape) {
  if (x.rank() != 2 || w.rank() != 2 || x.extent(1) != w.extent(1)) {
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " x " +
                     shape_str(w.shape()));
  }
  const std::size_t n = static_cast<std::size_t>(x.extent(0));
  const std::size_t f = static_cast<std::size_t>(x.extent(1));
  const std::size_t k = static_cast<std::size_t>(w.extent(0));
  if (b.defined() && (b.rank() != 1 || static_cast<std::size_t>(b.extent(0)) != k)) {
    throw ShapeError("linear: bias shape " + shape_str(b.shape()) + " does not match output " +
                     std::to_string(k));
  }
  Tensor<T> out({x.extent(0), w.extent(0)});
  const T* px = x.data();
  const T* pw = w.data();
  T* po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      T acc = b.defined() ? b.data()[j] : T(0);
      for (std::size_t c = 0; c < f; ++c) acc += px[i * f + c] * pw[j * f + c];
      po[i * k + j] = acc;
    }
  }

  const bool bias_tracked = tape && b.defined() && tape->tracks(b);
  if (any_tracked(tape, x, w) || bias_tracked) {
    const int ix = id_or_minus1(tape, x), iw = id_or_minus1(tape, w);
    const int ibias = bias_tracked ? b.tape_id : -1;
    const int io = tape->track(out);
    tape->record([ix, iw, ibias, io, x, w, n, f, k](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      const T* pg = g->data();
      if (ix >= 0) {
        T* d = t.grad_slot(ix).data();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < f; ++c) {
            T acc = T(0);
            for (std::size_t j = 0; j < k; ++j) acc += pg[i * k + j] * w.data()[j * f + c];
            d[i * f + c] += acc;
          }
        }
      }
      if (iw >= 0) {
        T* d = t.grad_slot(iw).data();
        for (std::size_t j = 0; j < k; ++j) {
          for (std::size_t c = 0; c < f; ++c) {
            T acc = T(0);
            for (std::size_t i = 0; i < n; ++i) acc += pg[i * k + j] * x.data()[i * f + c];
            d[j * f + c] += acc;
          }
        }
      }
      if (ibias >= 0) {
        T* d = t.grad_slot(ibias).data();
        for (std::size_t j = 0; j < k; ++j) {
          T acc = T(0);
          for (std::size_t i = 0; i < n; ++i) acc += pg[i * k + j];
          d[j] += acc;
        }
      }
    });
  }
  return out;
}

#define A2_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&, Tape<T>*);               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&, Tape<T>*);               \
  template Tensor<T> scale<T>(const Tensor<T>&, T, Tape<T>*);                            \
  template Tensor<T> sum<T>(const Tensor<T>&, Tape<T>*);                                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape, Tape<T>*);                      \
  template Tensor<T> transpose12<T>(const Tensor<T>&, Tape<T>*);                         \
  template Tensor<T> matmul_batched<T>(const Tensor<T>&, const Tensor<T>&, Tape<T>*);    \
  template Tensor<T> softmax<T>(const Tensor<T>&, int, Tape<T>*);                        \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tape<T>*);

A2_INSTANTIATE_OPS(float)
A2_INSTANTIATE_OPS(double)

#undef A2_INSTANTIATE_OPS

}  // namespace a2
