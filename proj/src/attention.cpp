#include "axialseg/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "axialseg/mac_counter.hpp"

namespace axialseg {

template <typename T>
void ProjectionSet<T>::validate() const {
  if (!wq || !wk || !wv) throw std::invalid_argument("ProjectionSet: missing projection");
  for (auto* p : {wq, wk, wv}) {
    const auto& s = p->value.shape();
    if (s.size() != 4 || s[2] != 1 || s[3] != 1) {
      throw ShapeError("ProjectionSet: '" + p->name + "' must be [C_attn, C_in, 1, 1], got " + shape_str(s));
    }
  }
  if (wk->value.shape() != wq->value.shape() || wv->value.shape() != wq->value.shape()) {
    throw ShapeError("ProjectionSet: W_Q/W_K/W_V disagree: " + shape_str(wq->value.shape()) + ", " +
                     shape_str(wk->value.shape()) + ", " + shape_str(wv->value.shape()));
  }
}

void AttnLayerConfig::validate() const {
  if (channels_in == 0 || channels_out == 0 || heads == 0) {
    throw std::invalid_argument("AttnLayerConfig: channels and heads must be positive");
  }
  if (channels_out % heads != 0) {
    throw std::invalid_argument("AttnLayerConfig: channels_out " + std::to_string(channels_out) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (gated && !positional) throw std::invalid_argument("AttnLayerConfig: gated attention requires positional=true");
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> full_self_attention_oracle(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk,
                                     const Tensor<T>& wv, std::size_t max_sites) {
  if (x.rank() != 4 || x.dim(0) != 1) {
    throw ShapeError("full_self_attention_oracle: expected [1,Cin,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t cin = x.dim(1), H = x.dim(2), W = x.dim(3), S = H * W;
  if (S > max_sites) {
    throw std::invalid_argument("full_self_attention_oracle: " + std::to_string(S) + " sites exceeds limit " +
                                std::to_string(max_sites));
  }
  if (wq.rank() != 4 || wq.dim(1) != cin || wk.shape() != wq.shape() || wv.shape() != wq.shape()) {
    throw ShapeError("full_self_attention_oracle: projections " + shape_str(wq.shape()) + " incompatible with " +
                     shape_str(x.shape()));
  }
  const std::size_t d = wq.dim(0);
  // Projected features laid out [site][channel].
  std::vector<T> q(S * d, 0), k(S * d, 0), v(S * d, 0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T xv = x[ci * S + s];
        q[s * d + c] += wq[c * cin + ci] * xv;
        k[s * d + c] += wk[c * cin + ci] * xv;
        v[s * d + c] += wv[c * cin + ci] * xv;
      }
  Tensor<T> y(Shape{1, d, H, W});
  std::vector<T> logits(S);
  std::uint64_t macs = 0;
  for (std::size_t s = 0; s < S; ++s) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t t = 0; t < S; ++t) {
      T l = 0;
      for (std::size_t c = 0; c < d; ++c) l += q[s * d + c] * k[t * d + c];
      macs += d;
      logits[t] = l;
      mx = std::max(mx, l);
    }
    T z = 0;
    for (std::size_t t = 0; t < S; ++t) {
      logits[t] = std::exp(logits[t] - mx);
      z += logits[t];
    }
    for (std::size_t c = 0; c < d; ++c) {
      T acc = 0;
      for (std::size_t t = 0; t < S; ++t) acc += (logits[t] / z) * v[t * d + c];
      y[c * S + s] = acc;
    }
    macs += S * d;
  }
  MacCounter::add(macs);
  return y;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rank() != 4 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw ShapeError("axial attention: q/k/v must share one rank-4 shape, got " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
}

template <typename T>
void check_tables(const Tensor<T>& q, const Tensor<T>* rq, const Tensor<T>* rk, const Tensor<T>* rv) {
  const bool any = rq || rk || rv;
  if (!any) return;
  if (!rq || !rk || !rv) throw std::invalid_argument("axial attention: r_q, r_k and r_v must come together");
  const std::size_t W = q.dim(3), d = q.dim(1);
  const Shape want{2 * W - 1, d};
  for (const auto* r : {rq, rk, rv}) {
    if (r->shape() != want) {
      throw ShapeError("axial attention: positional table " + shape_str(r->shape()) + " does not match axis length " +
                       std::to_string(W) + " (expected " + shape_str(want) + ")");
    }
  }
}

// Copies plane [n, :, i, :] of a [N,d,H,W] tensor into rows [w][c].
template <typename T>
void gather_row(const Tensor<T>& t, std::size_t n, std::size_t i, std::vector<T>& out) {
  const std::size_t d = t.dim(1), H = t.dim(2), W = t.dim(3);
  out.resize(W * d);
  for (std::size_t c = 0; c < d; ++c) {
    const T* src = t.data() + ((n * d + c) * H + i) * W;
    for (std::size_t w = 0; w < W; ++w) out[w * d + c] = src[w];
  }
}

template <typename T>
void scatter_row_add(Tensor<T>& t, std::size_t n, std::size_t i, const std::vector<T>& rows) {
  const std::size_t d = t.dim(1), H = t.dim(2), W = t.dim(3);
  for (std::size_t c = 0; c < d; ++c) {
    T* dst = t.data() + ((n * d + c) * H + i) * W;
    for (std::size_t w = 0; w < W; ++w) dst[w] += rows[w * d + c];
  }
}

template <typename T>
inline T dot(const T* a, const T* b, std::size_t d) {
  T s = 0;
  for (std::size_t c = 0; c < d; ++c) s += a[c] * b[c];
  return s;
}

}  // namespace

template <typename T>
AxialKernelResult<T> axial_width_kernel(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                        const Tensor<T>* rq, const Tensor<T>* rk, const Tensor<T>* rv,
                                        GateValues<T> g) {
  check_qkv(q, k, v);
  check_tables(q, rq, rk, rv);
  const bool pos = rq != nullptr;
  const std::size_t N = q.dim(0), d = q.dim(1), H = q.dim(2), W = q.dim(3);
  AxialKernelResult<T> res{Tensor<T>(q.shape()), Tensor<T>(Shape{N, H, W, W})};
  std::vector<T> Q, K, V, yrow(W * d);
  std::vector<T> logits(W);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < H; ++i) {
      gather_row(q, n, i, Q);
      gather_row(k, n, i, K);
      gather_row(v, n, i, V);
      for (std::size_t j = 0; j < W; ++j) {
        const T* qj = &Q[j * d];
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t w = 0; w < W; ++w) {
          const T* kw = &K[w * d];
          T l = dot(qj, kw, d);
          if (pos) {
            const std::size_t o = relative_index(j, w, W);
            l = l + g.q * dot(qj, rq->data() + o * d, d);
            l = l + g.k * dot(kw, rk->data() + o * d, d);
          }
          logits[w] = l;
          mx = std::max(mx, l);
        }
        T z = 0;
        for (std::size_t w = 0; w < W; ++w) {
          logits[w] = std::exp(logits[w] - mx);
          z += logits[w];
        }
        T* arow = res.attn.data() + ((n * H + i) * W + j) * W;
        for (std::size_t w = 0; w < W; ++w) arow[w] = logits[w] / z;
        T* yj = &yrow[j * d];
        std::fill(yj, yj + d, T(0));
        for (std::size_t w = 0; w < W; ++w) {
          const T a = arow[w];
          const T* vw = &V[w * d];
          if (pos) {
            const T* rvo = rv->data() + relative_index(j, w, W) * d;
            for (std::size_t c = 0; c < d; ++c) yj[c] += a * (g.v1 * vw[c] + g.v2 * rvo[c]);
          } else {
            for (std::size_t c = 0; c < d; ++c) yj[c] += a * (g.v1 * vw[c]);
          }
        }
      }
      for (std::size_t c = 0; c < d; ++c) {
        T* dst = res.y.data() + ((n * d + c) * H + i) * W;
        for (std::size_t j = 0; j < W; ++j) dst[j] = yrow[j * d + c];
      }
    }
  }
  // Per (row, query, key) pair: q.k and the weighted value sum, plus the
  // q.r_q, k.r_k and r_v terms when positional.
  const std::uint64_t pairs = static_cast<std::uint64_t>(N) * H * W * W;
  MacCounter::add(pairs * d * (pos ? 5 : 2));
  return res;
}

template <typename T>
Var<T> axial_attention_width(Var<T> q, Var<T> k, Var<T> v, const std::optional<PositionalVars<T>>& pos,
                             const std::optional<GateVars<T>>& gates) {
  if (gates && !pos) throw std::invalid_argument("axial attention: gates require positional tables");
  GateValues<T> gv;
  if (gates) {
    for (const auto* gvar : {&gates->q, &gates->k, &gates->v1, &gates->v2}) {
      if (gvar->value().numel() != 1) throw ShapeError("axial attention: gates must be scalars");
    }
    gv = {gates->q.value()[0], gates->k.value()[0], gates->v1.value()[0], gates->v2.value()[0]};
  }
  const Tensor<T>* rq = pos ? &pos->rq.value() : nullptr;
  const Tensor<T>* rk = pos ? &pos->rk.value() : nullptr;
  const Tensor<T>* rv = pos ? &pos->rv.value() : nullptr;
  AxialKernelResult<T> res = axial_width_kernel(q.value(), k.value(), v.value(), rq, rk, rv, gv);

  std::vector<Var<T>> inputs{q, k, v};
  if (pos) inputs.insert(inputs.end(), {pos->rq, pos->rk, pos->rv});
  if (gates) inputs.insert(inputs.end(), {gates->q, gates->k, gates->v1, gates->v2});

  return q.tape()->record(
      "axial_attention", std::move(res.y), inputs,
      [q, k, v, pos, gates, gv, attn = std::move(res.attn)](Tape<T>& t, const Tensor<T>& gy) {
        const std::size_t N = q.shape()[0], d = q.shape()[1], H = q.shape()[2], W = q.shape()[3];
        const bool has_pos = pos.has_value();
        const T* rq = has_pos ? pos->rq.value().data() : nullptr;
        const T* rk = has_pos ? pos->rk.value().data() : nullptr;
        const T* rv = has_pos ? pos->rv.value().data() : nullptr;
        const bool need_q = t.needs_grad(q), need_k = t.needs_grad(k), need_v = t.needs_grad(v);
        T* drq = has_pos && t.needs_grad(pos->rq) ? t.grad(pos->rq).data() : nullptr;
        T* drk = has_pos && t.needs_grad(pos->rk) ? t.grad(pos->rk).data() : nullptr;
        T* drv = has_pos && t.needs_grad(pos->rv) ? t.grad(pos->rv).data() : nullptr;
        T dgq = 0, dgk = 0, dgv1 = 0, dgv2 = 0;

        std::vector<T> Q, K, V, GY, dQ, dK, dV;
        std::vector<T> ga(W), gl(W);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t i = 0; i < H; ++i) {
            gather_row(q.value(), n, i, Q);
            gather_row(k.value(), n, i, K);
            gather_row(v.value(), n, i, V);
            gather_row(gy, n, i, GY);
            dQ.assign(W * d, T(0));
            dK.assign(W * d, T(0));
            dV.assign(W * d, T(0));
            for (std::size_t j = 0; j < W; ++j) {
              const T* arow = attn.data() + ((n * H + i) * W + j) * W;
              const T* gyj = &GY[j * d];
              const T* qj = &Q[j * d];
              // d(loss)/d(attention weight) and the value-side gradients.
              T s = 0;
              for (std::size_t w = 0; w < W; ++w) {
                const T a = arow[w];
                const T* vw = &V[w * d];
                const T gyv = dot(gyj, vw, d);
                T g = gv.v1 * gyv;
                if (has_pos) {
                  const std::size_t o = relative_index(j, w, W);
                  const T gyr = dot(gyj, rv + o * d, d);
                  g += gv.v2 * gyr;
                  dgv2 += a * gyr;
                  if (drv)
                    for (std::size_t c = 0; c < d; ++c) drv[o * d + c] += a * gv.v2 * gyj[c];
                }
                dgv1 += a * gyv;
                if (need_v)
                  for (std::size_t c = 0; c < d; ++c) dV[w * d + c] += a * gv.v1 * gyj[c];
                ga[w] = g;
                s += a * g;
              }
              // Through the softmax to the logits.
              for (std::size_t w = 0; w < W; ++w) gl[w] = arow[w] * (ga[w] - s);
              for (std::size_t w = 0; w < W; ++w) {
                const T l = gl[w];
                const T* kw = &K[w * d];
                if (need_q)
                  for (std::size_t c = 0; c < d; ++c) dQ[j * d + c] += l * kw[c];
                if (need_k)
                  for (std::size_t c = 0; c < d; ++c) dK[w * d + c] += l * qj[c];
                if (!has_pos) continue;
                const std::size_t o = relative_index(j, w, W);
                const T* rqo = rq + o * d;
                const T* rko = rk + o * d;
                if (need_q)
                  for (std::size_t c = 0; c < d; ++c) dQ[j * d + c] += l * gv.q * rqo[c];
                if (need_k)
                  for (std::size_t c = 0; c < d; ++c) dK[w * d + c] += l * gv.k * rko[c];
                if (drq)
                  for (std::size_t c = 0; c < d; ++c) drq[o * d + c] += l * gv.q * qj[c];
                if (drk)
                  for (std::size_t c = 0; c < d; ++c) drk[o * d + c] += l * gv.k * kw[c];
                dgq += l * dot(qj, rqo, d);
                dgk += l * dot(kw, rko, d);
              }
            }
            if (need_q) scatter_row_add(t.grad(q), n, i, dQ);
            if (need_k) scatter_row_add(t.grad(k), n, i, dK);
            if (need_v) scatter_row_add(t.grad(v), n, i, dV);
          }
        }
        if (gates) {
          if (t.needs_grad(gates->q)) t.grad(gates->q)[0] += dgq;
          if (t.needs_grad(gates->k)) t.grad(gates->k)[0] += dgk;
          if (t.needs_grad(gates->v1)) t.grad(gates->v1)[0] += dgv1;
          if (t.needs_grad(gates->v2)) t.grad(gates->v2)[0] += dgv2;
        }
      });
}

namespace {

template <typename T>
Var<T> project(Var<T> x, Param<T>& w) {
  return ops::conv2d(x, x.tape()->param(w), std::nullopt, 1, 0);
}

template <typename T>
std::optional<PositionalVars<T>> bind_tables(Tape<T>& tape, const RelPosEnc<T>* enc) {
  if (!enc) return std::nullopt;
  return PositionalVars<T>{tape.param(*enc->rq), tape.param(*enc->rk), tape.param(*enc->rv)};
}

template <typename T>
std::optional<GateVars<T>> bind_gates(Tape<T>& tape, const GateSet<T>* gates) {
  if (!gates) return std::nullopt;
  return GateVars<T>{tape.param(*gates->gq), tape.param(*gates->gk), tape.param(*gates->gv1),
                     tape.param(*gates->gv2)};
}

}  // namespace

template <typename T>
Var<T> axial_attention(Var<T> x, const ProjectionSet<T>& proj, std::type_identity_t<const RelPosEnc<T>*> enc,
                       std::type_identity_t<const GateSet<T>*> gates,
                       Axis axis) {
  proj.validate();
  if (gates && !enc) throw std::invalid_argument("axial_attention: gates require a positional encoding");
  if (x.value().rank() != 4) throw ShapeError("axial_attention: expected rank-4 input, got " + shape_str(x.shape()));
  Var<T> xin = axis == Axis::height ? ops::transpose_hw(x) : x;
  if (enc && enc->axis_len != xin.shape()[3]) {
    throw ShapeError("axial_attention: encoding axis length " + std::to_string(enc->axis_len) +
                     " does not match input " + shape_str(x.shape()) + " along the attended axis");
  }
  Tape<T>& tape = *x.tape();
  Var<T> y = axial_attention_width(project(xin, *proj.wq), project(xin, *proj.wk), project(xin, *proj.wv),
                                   bind_tables(tape, enc), bind_gates(tape, gates));
  return axis == Axis::height ? ops::transpose_hw(y) : y;
}

// ---------------------------------------------------------------------------

template <typename T>
MultiHeadAxial<T>::MultiHeadAxial(ParamStore<T>& store, const std::string& prefix, const AttnLayerConfig& cfg,
                                  std::size_t axis_len)
    : cfg_(cfg), axis_len_(axis_len) {
  cfg_.validate();
  const std::size_t cin = cfg_.channels_in, cout = cfg_.channels_out, d = head_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin));
  proj_.wq = &store.uniform(prefix + ".w_q", Shape{cout, cin, 1, 1}, bound);
  proj_.wk = &store.uniform(prefix + ".w_k", Shape{cout, cin, 1, 1}, bound);
  proj_.wv = &store.uniform(prefix + ".w_v", Shape{cout, cin, 1, 1}, bound);
  auto make_gates = [&](const std::string& p) {
    return GateSet<T>{&store.constant(p + ".gate_q", Shape{1}, T(1)), &store.constant(p + ".gate_k", Shape{1}, T(1)),
                      &store.constant(p + ".gate_v1", Shape{1}, T(1)),
                      &store.constant(p + ".gate_v2", Shape{1}, T(1))};
  };
  if (cfg_.positional) {
    const double rb = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const std::string hp = prefix + ".head" + std::to_string(h);
      enc_.push_back(RelPosEnc<T>{axis_len, d, &store.uniform(hp + ".r_q", Shape{2 * axis_len - 1, d}, rb),
                                  &store.uniform(hp + ".r_k", Shape{2 * axis_len - 1, d}, rb),
                                  &store.uniform(hp + ".r_v", Shape{2 * axis_len - 1, d}, rb)});
    }
  }
  if (cfg_.gated) {
    if (cfg_.per_head_gates) {
      for (std::size_t h = 0; h < cfg_.heads; ++h) gates_.push_back(make_gates(prefix + ".head" + std::to_string(h)));
    } else {
      gates_.push_back(make_gates(prefix));
    }
  }
}

template <typename T>
Var<T> MultiHeadAxial<T>::forward(Var<T> x) const {
  if (x.value().rank() != 4 || x.shape()[1] != cfg_.channels_in) {
    throw ShapeError("MultiHeadAxial: expected [N," + std::to_string(cfg_.channels_in) + ",H,W], got " +
                     shape_str(x.shape()));
  }
  Tape<T>& tape = *x.tape();
  Var<T> xin = cfg_.axis == Axis::height ? ops::transpose_hw(x) : x;
  if (xin.shape()[3] != axis_len_) {
    throw ShapeError("MultiHeadAxial: built for axis length " + std::to_string(axis_len_) + ", got input " +
                     shape_str(x.shape()));
  }
  Var<T> q = project(xin, *proj_.wq);
  Var<T> k = project(xin, *proj_.wk);
  Var<T> v = project(xin, *proj_.wv);
  const std::size_t d = head_dim();
  std::vector<Var<T>> heads;
  heads.reserve(cfg_.heads);
  std::optional<GateVars<T>> shared_gates;
  if (cfg_.gated && !cfg_.per_head_gates) shared_gates = bind_gates(tape, &gates_[0]);
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    std::optional<PositionalVars<T>> pos;
    if (cfg_.positional) pos = bind_tables(tape, &enc_[h]);
    std::optional<GateVars<T>> gates = shared_gates;
    if (cfg_.gated && cfg_.per_head_gates) gates = bind_gates(tape, &gates_[h]);
    heads.push_back(axial_attention_width(ops::slice_channels(q, h * d, d), ops::slice_channels(k, h * d, d),
                                          ops::slice_channels(v, h * d, d), pos, gates));
  }
  Var<T> y = ops::concat_channels<T>(heads);
  return cfg_.axis == Axis::height ? ops::transpose_hw(y) : y;
}

// ---------------------------------------------------------------------------

template <typename T>
GatedAxialLayer<T>::GatedAxialLayer(ParamStore<T>& store, const std::string& prefix, AttnLayerConfig cfg,
                                    std::size_t in_h, std::size_t in_w, std::size_t stride)
    : cfg_(cfg),
      stride_(stride),
      out_h_((in_h - 1) / stride + 1),
      out_w_((in_w - 1) / stride + 1),
      in_w_(&store.uniform(prefix + ".conv_in.weight", Shape{cfg.channels_out, cfg.channels_in, 1, 1},
                           1.0 / std::sqrt(static_cast<double>(cfg.channels_in)))),
      bn_gamma_(&store.constant(prefix + ".norm.gamma", Shape{cfg.channels_out}, T(1))),
      bn_beta_(&store.constant(prefix + ".norm.beta", Shape{cfg.channels_out}, T(0))),
      bn_mean_(&store.buffer(prefix + ".norm.running_mean", Shape{cfg.channels_out}, T(0))),
      bn_var_(&store.buffer(prefix + ".norm.running_var", Shape{cfg.channels_out}, T(1))),
      height_(store, prefix + ".height",
              [&] {
                AttnLayerConfig c = cfg;
                c.channels_in = cfg.channels_out;
                c.axis = Axis::height;
                return c;
              }(),
              out_h_),
      width_(store, prefix + ".width",
             [&] {
               AttnLayerConfig c = cfg;
               c.channels_in = cfg.channels_out;
               c.axis = Axis::width;
               return c;
             }(),
             out_w_),
      out_w_param_(&store.uniform(prefix + ".conv_out.weight", Shape{cfg.channels_out, cfg.channels_out, 1, 1},
                                  1.0 / std::sqrt(static_cast<double>(cfg.channels_out)))),
      out_b_param_(&store.constant(prefix + ".conv_out.bias", Shape{cfg.channels_out}, T(0))) {
  if (stride != 1 && stride != 2) throw std::invalid_argument("GatedAxialLayer: stride must be 1 or 2");
  if (stride != 1 || cfg.channels_in != cfg.channels_out) {
    res_w_ = &store.uniform(prefix + ".residual.weight", Shape{cfg.channels_out, cfg.channels_in, 1, 1},
                            1.0 / std::sqrt(static_cast<double>(cfg.channels_in)));
  }
}

template <typename T>
Var<T> GatedAxialLayer<T>::forward(Var<T> x, ops::NormMode mode) const {
  Tape<T>& tape = *x.tape();
  Var<T> h = ops::conv2d(x, tape.param(*in_w_), std::nullopt, stride_, 0);
  h = ops::batchnorm2d(h, tape.param(*bn_gamma_), tape.param(*bn_beta_), ops::RunningStats<T>{bn_mean_, bn_var_}, mode);
  h = ops::relu(h);
  h = height_.forward(h);
  h = width_.forward(h);
  h = ops::relu(h);
  Var<T> out = ops::conv2d(h, tape.param(*out_w_param_), tape.param(*out_b_param_), 1, 0);
  Var<T> res = res_w_ ? ops::conv2d(x, tape.param(*res_w_), std::nullopt, stride_, 0) : x;
  return ops::add(out, res);
}

template <typename T>
std::vector<GateSet<T>> GatedAxialLayer<T>::gates() const {
  std::vector<GateSet<T>> out = height_.gates();
  out.insert(out.end(), width_.gates().begin(), width_.gates().end());
  return out;
}

template struct ProjectionSet<float>;
template struct ProjectionSet<double>;
template class MultiHeadAxial<float>;
template class MultiHeadAxial<double>;
template class GatedAxialLayer<float>;
template class GatedAxialLayer<double>;

#define AXIALSEG_INSTANTIATE_ATTN(T)                                                                            \
  template Tensor<T> full_self_attention_oracle(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                                const Tensor<T>&, std::size_t);                                \
  template AxialKernelResult<T> axial_width_kernel(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                                   const Tensor<T>*, const Tensor<T>*, const Tensor<T>*,       \
                                                   GateValues<T>);                                             \
  template Var<T> axial_attention_width(Var<T>, Var<T>, Var<T>, const std::optional<PositionalVars<T>>&,       \
                                        const std::optional<GateVars<T>>&);                                    \
  template Var<T> axial_attention(Var<T>, const ProjectionSet<T>&, const RelPosEnc<T>*, const GateSet<T>*, Axis);

AXIALSEG_INSTANTIATE_ATTN(float)
AXIALSEG_INSTANTIATE_ATTN(double)

}  // namespace axialseg
