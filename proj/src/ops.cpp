#include "axialseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace axialseg::ops {

namespace {

template <typename T>
void require_rank4(const Var<T>& x, const char* op) {
  if (x.value().rank() != 4) {
    throw ShapeError(std::string(op) + ": expected rank-4 NCHW input, got " + shape_str(x.shape()));
  }
}

enum class Broadcast { none, scalar_a, scalar_b };

template <typename T>
Broadcast check_binary(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.value().numel() == 1) return Broadcast::scalar_b;
  if (a.value().numel() == 1) return Broadcast::scalar_a;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Adds g (full size) into the grad of v, reducing to a scalar when v is the broadcast operand.
template <typename T>
void accumulate(Tape<T>& tape, const Var<T>& v, const Tensor<T>& g, bool reduce) {
  if (!tape.needs_grad(v)) return;
  auto& gv = tape.grad(v);
  if (reduce) {
    T s = 0;
    for (T x : g.vec()) s += x;
    gv[0] += s;
  } else {
    gv += g;
  }
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto mode = check_binary(a, b, "add");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(mode == Broadcast::scalar_a ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = av[mode == Broadcast::scalar_a ? 0 : i] + bv[mode == Broadcast::scalar_b ? 0 : i];
  }
  return a.tape()->record("add", std::move(out), {a, b}, [a, b, mode](Tape<T>& t, const Tensor<T>& g) {
    accumulate(t, a, g, mode == Broadcast::scalar_a);
    accumulate(t, b, g, mode == Broadcast::scalar_b);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto mode = check_binary(a, b, "sub");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(mode == Broadcast::scalar_a ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = av[mode == Broadcast::scalar_a ? 0 : i] - bv[mode == Broadcast::scalar_b ? 0 : i];
  }
  return a.tape()->record("sub", std::move(out), {a, b}, [a, b, mode](Tape<T>& t, const Tensor<T>& g) {
    accumulate(t, a, g, mode == Broadcast::scalar_a);
    if (t.needs_grad(b)) {
      Tensor<T> neg = g;
      for (auto& x : neg.vec()) x = -x;
      accumulate(t, b, neg, mode == Broadcast::scalar_b);
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto mode = check_binary(a, b, "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(mode == Broadcast::scalar_a ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = av[mode == Broadcast::scalar_a ? 0 : i] * bv[mode == Broadcast::scalar_b ? 0 : i];
  }
  return a.tape()->record("mul", std::move(out), {a, b}, [a, b, mode](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    const std::size_t n = g.numel();
    if (t.needs_grad(a)) {
      Tensor<T> ga(g.shape());
      for (std::size_t i = 0; i < n; ++i) ga[i] = g[i] * bv[mode == Broadcast::scalar_b ? 0 : i];
      accumulate(t, a, ga, mode == Broadcast::scalar_a);
    }
    if (t.needs_grad(b)) {
      Tensor<T> gb(g.shape());
      for (std::size_t i = 0; i < n; ++i) gb[i] = g[i] * av[mode == Broadcast::scalar_a ? 0 : i];
      accumulate(t, b, gb, mode == Broadcast::scalar_b);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& x : out.vec()) x *= factor;
  return a.tape()->record("scale", std::move(out), {a}, [a, factor](Tape<T>& t, const Tensor<T>& g) {
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& x : out.vec()) x = x > T(0) ? x : T(0);
  return a.tape()->record("relu", std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = a.value();
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (av[i] > T(0)) ga[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& x : out.vec()) x = T(1) / (T(1) + std::exp(-x));
  Tape<T>* tape = a.tape();
  const std::size_t out_id = tape->size();
  return tape->record("sigmoid", std::move(out), {a}, [a, out_id](Tape<T>& t, const Tensor<T>& g) {
    const auto& y = t.value(Var<T>(&t, out_id));
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T x : a.value().vec()) s += x;
  return a.tape()->record("sum", Tensor<T>::scalar(s), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    auto& ga = t.grad(a);
    for (auto& x : ga.vec()) x += g[0];
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const T n = static_cast<T>(a.value().numel());
  T s = 0;
  for (T x : a.value().vec()) s += x;
  return a.tape()->record("mean", Tensor<T>::scalar(s / n), {a}, [a, n](Tape<T>& t, const Tensor<T>& g) {
    auto& ga = t.grad(a);
    const T d = g[0] / n;
    for (auto& x : ga.vec()) x += d;
  });
}

// ---------------------------------------------------------------------------
// matmul

namespace {

struct MatmulDims {
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  bool a_batched = false, b_batched = false;
  Shape out_shape;
};

MatmulDims matmul_dims(const Shape& as, const Shape& bs) {
  auto fail = [&] { throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs)); };
  if (as.size() < 2 || bs.size() < 2) fail();
  MatmulDims d;
  d.m = as[as.size() - 2];
  d.k = as[as.size() - 1];
  d.n = bs[bs.size() - 1];
  if (bs[bs.size() - 2] != d.k) fail();
  Shape abatch(as.begin(), as.end() - 2);
  Shape bbatch(bs.begin(), bs.end() - 2);
  const std::size_t na = shape_numel(abatch);
  const std::size_t nb = shape_numel(bbatch);
  Shape batch;
  if (abatch == bbatch) {
    batch = abatch;
    d.a_batched = d.b_batched = na > 1;
  } else if (nb == 1) {
    batch = abatch;
    d.a_batched = true;
  } else if (na == 1) {
    batch = bbatch;
    d.b_batched = true;
  } else {
    fail();
  }
  d.batch = shape_numel(batch);
  d.out_shape = batch;
  d.out_shape.push_back(d.m);
  d.out_shape.push_back(d.n);
  return d;
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const MatmulDims d = matmul_dims(a.shape(), b.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(d.out_shape);
  for (std::size_t p = 0; p < d.batch; ++p) {
    const T* A = av.data() + (d.a_batched ? p * d.m * d.k : 0);
    const T* B = bv.data() + (d.b_batched ? p * d.k * d.n : 0);
    T* C = out.data() + p * d.m * d.n;
    for (std::size_t i = 0; i < d.m; ++i) {
      for (std::size_t kk = 0; kk < d.k; ++kk) {
        const T aik = A[i * d.k + kk];
        const T* brow = B + kk * d.n;
        T* crow = C + i * d.n;
        for (std::size_t j = 0; j < d.n; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  return a.tape()->record("matmul", std::move(out), {a, b}, [a, b, d](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t p = 0; p < d.batch; ++p) {
      const T* A = av.data() + (d.a_batched ? p * d.m * d.k : 0);
      const T* B = bv.data() + (d.b_batched ? p * d.k * d.n : 0);
      const T* G = g.data() + p * d.m * d.n;
      if (t.needs_grad(a)) {
        T* GA = t.grad(a).data() + (d.a_batched ? p * d.m * d.k : 0);
        for (std::size_t i = 0; i < d.m; ++i)
          for (std::size_t kk = 0; kk < d.k; ++kk) {
            T s = 0;
            for (std::size_t j = 0; j < d.n; ++j) s += G[i * d.n + j] * B[kk * d.n + j];
            GA[i * d.k + kk] += s;
          }
      }
      if (t.needs_grad(b)) {
        T* GB = t.grad(b).data() + (d.b_batched ? p * d.k * d.n : 0);
        for (std::size_t i = 0; i < d.m; ++i)
          for (std::size_t kk = 0; kk < d.k; ++kk) {
            const T aik = A[i * d.k + kk];
            for (std::size_t j = 0; j < d.n; ++j) GB[kk * d.n + j] += aik * G[i * d.n + j];
          }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// softmax

namespace {
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}
}  // namespace

template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis) {
  if (axis >= a.value().rank()) {
    throw std::out_of_range("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                            shape_str(a.shape()));
  }
  const AxisSplit s = split_axis(a.shape(), axis);
  const auto& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = x[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, x[base + l * s.inner]);
      T z = 0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const T e = std::exp(x[base + l * s.inner] - mx);
        y[base + l * s.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) y[base + l * s.inner] /= z;
    }
  }
  Tape<T>* tape = a.tape();
  const std::size_t out_id = tape->size();
  return tape->record("softmax", std::move(y), {a}, [a, s, out_id](Tape<T>& t, const Tensor<T>& g) {
    const auto& yv = t.value(Var<T>(&t, out_id));
    auto& ga = t.grad(a);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        T dot = 0;
        for (std::size_t l = 0; l < s.len; ++l) dot += yv[base + l * s.inner] * g[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t idx = base + l * s.inner;
          ga[idx] += yv[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvGeom {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
};

ConvGeom conv_geom(const Shape& xs, const Shape& ws, std::size_t stride, std::size_t pad) {
  if (xs.size() != 4 || ws.size() != 4) {
    throw ShapeError("conv2d: expected x [N,Cin,H,W] and w [Cout,Cin,kh,kw], got " + shape_str(xs) + " and " +
                     shape_str(ws));
  }
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(xs) + " vs weight " + shape_str(ws));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, pad, 0, 0};
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    throw ShapeError("conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// Output columns ow for which iw = ow*stride + kx - pad lies in [0, w).
inline void valid_range(std::size_t k, std::size_t pad, std::size_t stride, std::size_t in, std::size_t out,
                        std::size_t& lo, std::size_t& hi) {
  // smallest o with o*stride + k >= pad
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  // largest o with o*stride + k - pad <= in - 1
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in) - 1 + static_cast<std::ptrdiff_t>(pad) -
                             static_cast<std::ptrdiff_t>(k);
  if (top < 0) {
    lo = hi = 0;
    return;
  }
  hi = std::min(out, static_cast<std::size_t>(top) / stride + 1);
  if (lo > hi) lo = hi;
}

// Unfolds one image [cin, h, w] into columns [cin*kh*kw, oh*ow]; padding reads as zero.
template <typename T>
void im2col(const ConvGeom& g, const T* x, T* col) {
  const std::size_t P = g.oh * g.ow;
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++r) {
        T* c = col + r * P;
        std::fill(c, c + P, T(0));
        std::size_t oy_lo, oy_hi, ox_lo, ox_hi;
        valid_range(ky, g.pad, g.stride, g.h, g.oh, oy_lo, oy_hi);
        valid_range(kx, g.pad, g.stride, g.w, g.ow, ox_lo, ox_hi);
        for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
          const T* xr = x + (ci * g.h + oy * g.stride + ky - g.pad) * g.w + kx - g.pad;
          for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) c[oy * g.ow + ox] = xr[ox * g.stride];
        }
      }
}

// Adds columns back onto the image they were unfolded from.
template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* x) {
  const std::size_t P = g.oh * g.ow;
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++r) {
        const T* c = col + r * P;
        std::size_t oy_lo, oy_hi, ox_lo, ox_hi;
        valid_range(ky, g.pad, g.stride, g.h, g.oh, oy_lo, oy_hi);
        valid_range(kx, g.pad, g.stride, g.w, g.ow, ox_lo, ox_hi);
        for (std::size_t oy = oy_lo; oy < oy_hi; ++oy) {
          T* xr = x + (ci * g.h + oy * g.stride + ky - g.pad) * g.w + kx - g.pad;
          for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) xr[ox * g.stride] += c[oy * g.ow + ox];
        }
      }
}

inline bool is_pointwise(const ConvGeom& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

template <typename T>
void conv_forward(const ConvGeom& g, const T* x, const T* w, const T* bias, T* y) {
  const std::size_t K = g.cin * g.kh * g.kw;
  const std::size_t P = g.oh * g.ow;
  std::vector<T> buf(is_pointwise(g) ? 0 : K * P);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x + n * g.cin * g.h * g.w;
    const T* col = xn;
    if (!is_pointwise(g)) {
      im2col(g, xn, buf.data());
      col = buf.data();
    }
    for (std::size_t co = 0; co < g.cout; ++co) {
      T* yp = y + (n * g.cout + co) * P;
      std::fill(yp, yp + P, bias ? bias[co] : T(0));
      const T* wr = w + co * K;
      for (std::size_t k = 0; k < K; ++k) {
        const T wv = wr[k];
        const T* c = col + k * P;
        for (std::size_t p = 0; p < P; ++p) yp[p] += wv * c[p];
      }
    }
  }
}

}  // namespace

namespace kernel {
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::size_t stride,
                 std::size_t padding) {
  const ConvGeom g = conv_geom(x.shape(), w.shape(), stride, padding);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias " + shape_str(bias->shape()) + " does not match weight " + shape_str(w.shape()));
  }
  Tensor<T> y(Shape{g.n, g.cout, g.oh, g.ow});
  conv_forward(g, x.data(), w.data(), bias ? bias->data() : nullptr, y.data());
  return y;
}
}  // namespace kernel

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride, std::size_t padding) {
  const ConvGeom g = conv_geom(x.shape(), w.shape(), stride, padding);
  Tensor<T> y = kernel::conv2d(x.value(), w.value(), bias ? &bias->value() : nullptr, stride, padding);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return x.tape()->record("conv2d", std::move(y), inputs, [x, w, bias, g](Tape<T>& t, const Tensor<T>& gy) {
    const std::size_t in_plane = g.h * g.w;
    const std::size_t out_plane = g.oh * g.ow;
    const bool need_x = t.needs_grad(x);
    const bool need_w = t.needs_grad(w);
    const T* xv = x.value().data();
    const T* wv = w.value().data();
    T* gx = need_x ? t.grad(x).data() : nullptr;
    T* gw = need_w ? t.grad(w).data() : nullptr;
    if (bias && t.needs_grad(*bias)) {
      auto& gb = t.grad(*bias);
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t co = 0; co < g.cout; ++co) {
          const T* gp = gy.data() + (n * g.cout + co) * out_plane;
          T s = 0;
          for (std::size_t i = 0; i < out_plane; ++i) s += gp[i];
          gb[co] += s;
        }
    }
    if (!need_x && !need_w) return;
    const std::size_t K = g.cin * g.kh * g.kw;
    const bool pointwise = is_pointwise(g);
    std::vector<T> col(pointwise || !need_w ? 0 : K * out_plane);
    std::vector<T> gcol(need_x ? K * out_plane : 0);
    for (std::size_t n = 0; n < g.n; ++n) {
      const T* xn = xv + n * g.cin * in_plane;
      const T* cols = xn;
      if (need_w && !pointwise) {
        im2col(g, xn, col.data());
        cols = col.data();
      }
      if (need_x) std::fill(gcol.begin(), gcol.end(), T(0));
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T* gp = gy.data() + (n * g.cout + co) * out_plane;
        const T* wr = wv + co * K;
        for (std::size_t k = 0; k < K; ++k) {
          if (need_w) {
            const T* c = cols + k * out_plane;
            T acc = 0;
            for (std::size_t p = 0; p < out_plane; ++p) acc += gp[p] * c[p];
            gw[co * K + k] += acc;
          }
          if (need_x) {
            const T wk = wr[k];
            T* gc = gcol.data() + k * out_plane;
            for (std::size_t p = 0; p < out_plane; ++p) gc[p] += wk * gp[p];
          }
        }
      }
      if (need_x) {
        T* gxn = gx + n * g.cin * in_plane;
        if (pointwise) {
          for (std::size_t i = 0; i < K * out_plane; ++i) gxn[i] += gcol[i];
        } else {
          col2im_add(g, gcol.data(), gxn);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// batchnorm2d

template <typename T>
Var<T> batchnorm2d(Var<T> x, Var<T> gamma, Var<T> beta, RunningStats<T> stats, NormMode mode, double eps,
                   double momentum) {
  require_rank4(x, "batchnorm2d");
  const auto& xs = x.shape();
  const std::size_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (gamma.value().numel() != C || beta.value().numel() != C) {
    throw ShapeError("batchnorm2d: gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                     " do not match channels of " + shape_str(xs));
  }
  if (stats.mean == nullptr || stats.var == nullptr || stats.mean->numel() != C || stats.var->numel() != C) {
    throw ShapeError("batchnorm2d: running stats missing or not of length " + std::to_string(C));
  }
  const std::size_t count = N * HW;
  if (mode == NormMode::train && count == 1) {
    throw std::invalid_argument("batchnorm2d: train mode needs more than one value per channel, got input " +
                                shape_str(xs));
  }
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> y(xs);
  // xhat is kept for the backward rule; inv_std per channel.
  Tensor<T> xhat(xs);
  std::vector<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    T mu, var;
    if (mode == NormMode::train) {
      T s = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = xv.data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      mu = s / static_cast<T>(count);
      T ss = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = xv.data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      var = ss / static_cast<T>(count);
      const T unbiased = ss / static_cast<T>(count - 1);
      const T m = static_cast<T>(momentum);
      (*stats.mean)[c] = (T(1) - m) * (*stats.mean)[c] + m * mu;
      (*stats.var)[c] = (T(1) - m) * (*stats.var)[c] + m * unbiased;
    } else {
      mu = (*stats.mean)[c];
      var = (*stats.var)[c];
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[c] = is;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T h = (xv[off + i] - mu) * is;
        xhat[off + i] = h;
        y[off + i] = gv[c] * h + bv[c];
      }
    }
  }
  return x.tape()->record(
      "batchnorm2d", std::move(y), {x, gamma, beta},
      [x, gamma, beta, mode, N, C, HW, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, const Tensor<T>& g) {
        const auto& gv = gamma.value();
        for (std::size_t c = 0; c < C; ++c) {
          T sg = 0, sgx = 0;
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t off = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              sg += g[off + i];
              sgx += g[off + i] * xhat[off + i];
            }
          }
          if (t.needs_grad(gamma)) t.grad(gamma)[c] += sgx;
          if (t.needs_grad(beta)) t.grad(beta)[c] += sg;
          if (!t.needs_grad(x)) continue;
          auto& gx = t.grad(x);
          if (mode == NormMode::eval) {
            const T k = gv[c] * inv_std[c];
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t off = (n * C + c) * HW;
              for (std::size_t i = 0; i < HW; ++i) gx[off + i] += k * g[off + i];
            }
          } else {
            const T m = static_cast<T>(count);
            const T k = gv[c] * inv_std[c] / m;
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t off = (n * C + c) * HW;
              for (std::size_t i = 0; i < HW; ++i) gx[off + i] += k * (m * g[off + i] - sg - xhat[off + i] * sgx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// resampling

namespace kernel {

LinearTaps bilinear_taps(std::size_t in, std::size_t out) {
  LinearTaps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    taps.lo[o] = lo;
    taps.hi[o] = std::min(lo + 1, in - 1);
    taps.frac[o] = src - static_cast<double>(lo);
  }
  return taps;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw ShapeError("bilinear_resize: expected rank-4 input, got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const LinearTaps ty = bilinear_taps(H, out_h);
  const LinearTaps tx = bilinear_taps(W, out_w);
  Tensor<T> y(Shape{N, C, out_h, out_w});
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* src = x.data() + p * H * W;
    T* dst = y.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ty.frac[oy]);
      const T* r0 = src + ty.lo[oy] * W;
      const T* r1 = src + ty.hi[oy] * W;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(tx.frac[ox]);
        const T top = (T(1) - fx) * r0[tx.lo[ox]] + fx * r0[tx.hi[ox]];
        const T bot = (T(1) - fx) * r1[tx.lo[ox]] + fx * r1[tx.hi[ox]];
        dst[oy * out_w + ox] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return y;
}

}  // namespace kernel

template <typename T>
Var<T> upsample2x(Var<T> x) {
  require_rank4(x, "upsample2x");
  const Shape xs = x.shape();
  const std::size_t H = xs[2], W = xs[3], OH = 2 * H, OW = 2 * W;
  Tensor<T> y = kernel::bilinear_resize(x.value(), OH, OW);
  return x.tape()->record("upsample2x", std::move(y), {x}, [x, xs, H, W, OH, OW](Tape<T>& t, const Tensor<T>& g) {
    const auto ty = kernel::bilinear_taps(H, OH);
    const auto tx = kernel::bilinear_taps(W, OW);
    auto& gx = t.grad(x);
    for (std::size_t p = 0; p < xs[0] * xs[1]; ++p) {
      T* dst = gx.data() + p * H * W;
      const T* src = g.data() + p * OH * OW;
      for (std::size_t oy = 0; oy < OH; ++oy) {
        const T fy = static_cast<T>(ty.frac[oy]);
        for (std::size_t ox = 0; ox < OW; ++ox) {
          const T fx = static_cast<T>(tx.frac[ox]);
          const T gv = src[oy * OW + ox];
          dst[ty.lo[oy] * W + tx.lo[ox]] += (T(1) - fy) * (T(1) - fx) * gv;
          dst[ty.lo[oy] * W + tx.hi[ox]] += (T(1) - fy) * fx * gv;
          dst[ty.hi[oy] * W + tx.lo[ox]] += fy * (T(1) - fx) * gv;
          dst[ty.hi[oy] * W + tx.hi[ox]] += fy * fx * gv;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// layout ops

template <typename T>
Var<T> transpose_hw(Var<T> x) {
  require_rank4(x, "transpose_hw");
  const Shape xs = x.shape();
  const std::size_t P = xs[0] * xs[1], H = xs[2], W = xs[3];
  const auto& xv = x.value();
  Tensor<T> y(Shape{xs[0], xs[1], W, H});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) y[(p * W + w) * H + h] = xv[(p * H + h) * W + w];
  return x.tape()->record("transpose_hw", std::move(y), {x}, [x, P, H, W](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) gx[(p * H + h) * W + w] += g[(p * W + w) * H + h];
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  return x.tape()->record("reshape", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t count) {
  require_rank4(x, "slice_channels");
  const Shape xs = x.shape();
  if (count == 0 || begin + count > xs[1]) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside channels of " + shape_str(xs));
  }
  const std::size_t plane = xs[2] * xs[3];
  const auto& xv = x.value();
  Tensor<T> y(Shape{xs[0], count, xs[2], xs[3]});
  for (std::size_t n = 0; n < xs[0]; ++n)
    std::copy_n(xv.data() + (n * xs[1] + begin) * plane, count * plane, y.data() + n * count * plane);
  return x.tape()->record("slice_channels", std::move(y), {x},
                          [x, xs, begin, count, plane](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad(x);
                            for (std::size_t n = 0; n < xs[0]; ++n) {
                              T* dst = gx.data() + (n * xs[1] + begin) * plane;
                              const T* src = g.data() + n * count * plane;
                              for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                            }
                          });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = parts[0].shape();
  if (first.size() != 4) throw ShapeError("concat_channels: expected rank-4 inputs, got " + shape_str(first));
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    offsets.push_back(total);
    total += s[1];
  }
  const std::size_t N = first[0], plane = first[2] * first[3];
  Tensor<T> y(Shape{N, total, first[2], first[3]});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    const std::size_t c = v.dim(1);
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(v.data() + n * c * plane, c * plane, y.data() + (n * total + offsets[k]) * plane);
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape()->record(
      "concat_channels", std::move(y), inputs, [inputs, offsets, N, total, plane](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!t.needs_grad(inputs[k])) continue;
          auto& gp = t.grad(inputs[k]);
          const std::size_t c = gp.dim(1);
          for (std::size_t n = 0; n < N; ++n) {
            const T* src = g.data() + (n * total + offsets[k]) * plane;
            T* dst = gp.data() + n * c * plane;
            for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
Var<T> crop(Var<T> x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  require_rank4(x, "crop");
  const Shape xs = x.shape();
  if (h == 0 || w == 0 || top + h > xs[2] || left + w > xs[3]) {
    throw ShapeError("crop: window outside input " + shape_str(xs));
  }
  const std::size_t P = xs[0] * xs[1], H = xs[2], W = xs[3];
  const auto& xv = x.value();
  Tensor<T> y(Shape{xs[0], xs[1], h, w});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(xv.data() + (p * H + top + r) * W + left, w, y.data() + (p * h + r) * w);
  return x.tape()->record("crop", std::move(y), {x}, [x, P, H, W, top, left, h, w](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(x);
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t r = 0; r < h; ++r) {
        T* dst = gx.data() + (p * H + top + r) * W + left;
        const T* src = g.data() + (p * h + r) * w;
        for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
      }
  });
}

template <typename T>
Var<T> tile_grid(std::span<const Var<T>> tiles, std::size_t grid) {
  if (grid == 0 || tiles.size() != grid * grid) {
    throw ShapeError("tile_grid: expected " + std::to_string(grid * grid) + " tiles, got " +
                     std::to_string(tiles.size()));
  }
  const Shape ts = tiles[0].shape();
  if (ts.size() != 4) throw ShapeError("tile_grid: expected rank-4 tiles, got " + shape_str(ts));
  for (const auto& tile : tiles) {
    if (tile.shape() != ts) {
      throw ShapeError("tile_grid: tile " + shape_str(tile.shape()) + " differs from " + shape_str(ts));
    }
  }
  const std::size_t P = ts[0] * ts[1], h = ts[2], w = ts[3], H = h * grid, W = w * grid;
  Tensor<T> y(Shape{ts[0], ts[1], H, W});
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    const std::size_t top = (k / grid) * h, left = (k % grid) * w;
    const auto& v = tiles[k].value();
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t r = 0; r < h; ++r) std::copy_n(v.data() + (p * h + r) * w, w, y.data() + (p * H + top + r) * W + left);
  }
  std::vector<Var<T>> inputs(tiles.begin(), tiles.end());
  return tiles[0].tape()->record(
      "tile_grid", std::move(y), inputs, [inputs, grid, P, h, w, H, W](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!t.needs_grad(inputs[k])) continue;
          auto& gt = t.grad(inputs[k]);
          const std::size_t top = (k / grid) * h, left = (k % grid) * w;
          for (std::size_t p = 0; p < P; ++p)
            for (std::size_t r = 0; r < h; ++r) {
              const T* src = g.data() + (p * H + top + r) * W + left;
              T* dst = gt.data() + (p * h + r) * w;
              for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
            }
        }
      });
}

// ---------------------------------------------------------------------------

#define AXIALSEG_INSTANTIATE_OPS(T)                                                                       \
  template Var<T> add(Var<T>, Var<T>);                                                                  \
  template Var<T> sub(Var<T>, Var<T>);                                                                  \
  template Var<T> mul(Var<T>, Var<T>);                                                                  \
  template Var<T> scale(Var<T>, T);                                                                     \
  template Var<T> relu(Var<T>);                                                                         \
  template Var<T> sigmoid(Var<T>);                                                                      \
  template Var<T> sum(Var<T>);                                                                          \
  template Var<T> mean(Var<T>);                                                                         \
  template Var<T> matmul(Var<T>, Var<T>);                                                               \
  template Var<T> softmax(Var<T>, std::size_t);                                                         \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t, std::size_t);              \
  template Var<T> batchnorm2d(Var<T>, Var<T>, Var<T>, RunningStats<T>, NormMode, double, double);       \
  template Var<T> upsample2x(Var<T>);                                                                   \
  template Var<T> transpose_hw(Var<T>);                                                                 \
  template Var<T> reshape(Var<T>, Shape);                                                               \
  template Var<T> slice_channels(Var<T>, std::size_t, std::size_t);                                     \
  template Var<T> concat_channels(std::span<const Var<T>>);                                             \
  template Var<T> crop(Var<T>, std::size_t, std::size_t, std::size_t, std::size_t);                     \
  template Var<T> tile_grid(std::span<const Var<T>>, std::size_t);                                      \
  template Tensor<T> kernel::bilinear_resize(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> kernel::conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, std::size_t, \
                                    std::size_t);

AXIALSEG_INSTANTIATE_OPS(float)
AXIALSEG_INSTANTIATE_OPS(double)

}  // namespace axialseg::ops
