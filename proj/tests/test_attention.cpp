#include <doctest.h>

#include <cmath>

#include "axialseg/attention.hpp"
#include "axialseg/gradcheck.hpp"
#include "axialseg/mac_counter.hpp"
#include "test_util.hpp"

using namespace axialseg;
using testutil::random;

namespace {

struct Fixture {
  ParamStore<double> store{3};
  ProjectionSet<double> proj;
  RelPosEnc<double> enc;
  GateSet<double> gates;

  Fixture(std::size_t cin, std::size_t d, std::size_t len, std::uint64_t seed) {
    proj.wq = &store.add("wq", random({d, cin, 1, 1}, seed));
    proj.wk = &store.add("wk", random({d, cin, 1, 1}, seed + 1));
    proj.wv = &store.add("wv", random({d, cin, 1, 1}, seed + 2));
    enc.axis_len = len;
    enc.head_dim = d;
    enc.rq = &store.add("rq", random({2 * len - 1, d}, seed + 3));
    enc.rk = &store.add("rk", random({2 * len - 1, d}, seed + 4));
    enc.rv = &store.add("rv", random({2 * len - 1, d}, seed + 5));
    gates = {&store.add("gq", Tensor<double>::scalar(1)), &store.add("gk", Tensor<double>::scalar(1)),
             &store.add("gv1", Tensor<double>::scalar(1)), &store.add("gv2", Tensor<double>::scalar(1))};
  }
};

// Width-axis attention with explicit loops straight from the formula.
Tensor<double> width_attention_oracle(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v,
                                      const Tensor<double>* rq, const Tensor<double>* rk, const Tensor<double>* rv,
                                      double gq, double gk, double gv1, double gv2) {
  const std::size_t N = q.dim(0), d = q.dim(1), H = q.dim(2), W = q.dim(3);
  Tensor<double> y(q.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        std::vector<double> logit(W);
        double mx = -1e300;
        for (std::size_t w = 0; w < W; ++w) {
          const std::size_t o = relative_index(j, w, W);
          double l = 0;
          for (std::size_t c = 0; c < d; ++c) {
            l += q.at(n, c, i, j) * k.at(n, c, i, w);
            if (rq) l += gq * q.at(n, c, i, j) * (*rq)[o * d + c] + gk * k.at(n, c, i, w) * (*rk)[o * d + c];
          }
          logit[w] = l;
          mx = std::max(mx, l);
        }
        double z = 0;
        for (auto& l : logit) z += (l = std::exp(l - mx));
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0;
          for (std::size_t w = 0; w < W; ++w) {
            const std::size_t o = relative_index(j, w, W);
            acc += logit[w] / z * (gv1 * v.at(n, c, i, w) + (rv ? gv2 * (*rv)[o * d + c] : 0.0));
          }
          y.at(n, c, i, j) = acc;
        }
      }
  return y;
}

}  // namespace

TEST_CASE("relative index covers [0, 2L-2] and is shift invariant") {
  const std::size_t L = 7;
  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t w = 0; w < L; ++w) {
      const std::size_t o = relative_index(j, w, L);
      CHECK(o <= 2 * L - 2);
      if (j + 1 < L && w + 1 < L) CHECK(relative_index(j + 1, w + 1, L) == o);
    }
  CHECK(relative_index(0, L - 1, L) == 0);
  CHECK(relative_index(L - 1, 0, L) == 2 * L - 2);
}

TEST_CASE("full oracle: single site returns v, uniform input gives constant output, size guard") {
  auto wq = random({3, 2, 1, 1}, 1), wk = random({3, 2, 1, 1}, 2), wv = random({3, 2, 1, 1}, 3);
  auto x = random({1, 2, 1, 1}, 4);
  auto y = full_self_attention_oracle(x, wq, wk, wv);
  for (std::size_t c = 0; c < 3; ++c) CHECK(y[c] == doctest::Approx(wv[c * 2] * x[0] + wv[c * 2 + 1] * x[1]));

  Tensor<double> u(Shape{1, 2, 3, 4}, 0.4);
  auto yu = full_self_attention_oracle(u, wq, wk, wv);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t s = 1; s < 12; ++s) CHECK(yu[c * 12 + s] == doctest::Approx(yu[c * 12]).epsilon(1e-14));

  CHECK_THROWS(full_self_attention_oracle(Tensor<double>(Shape{1, 2, 16, 17}), wq, wk, wv));
}

TEST_CASE("width kernel matches the loop oracle with positions and gates") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t W = 2 + seed;
    auto q = random({2, 3, 2, W}, 10 + seed), k = random({2, 3, 2, W}, 20 + seed), v = random({2, 3, 2, W}, 30 + seed);
    auto rq = random({2 * W - 1, 3}, 40 + seed), rk = random({2 * W - 1, 3}, 50 + seed),
         rv = random({2 * W - 1, 3}, 60 + seed);
    GateValues<double> g{0.3, -0.7, 1.2, 0.4};
    auto res = axial_width_kernel(q, k, v, &rq, &rk, &rv, g);
    auto ref = width_attention_oracle(q, k, v, &rq, &rk, &rv, g.q, g.k, g.v1, g.v2);
    CHECK(max_abs_diff(res.y, ref) < 1e-12);
    // attention rows sum to one
    for (std::size_t r = 0; r < res.attn.numel() / W; ++r) {
      double s = 0;
      for (std::size_t w = 0; w < W; ++w) s += res.attn[r * W + w];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("single column attention returns v") {
  Fixture f(2, 3, 1, 70);
  Tape<double> t;
  auto x = random({2, 2, 5, 1}, 71);
  auto y = axial_attention(t.constant(x), f.proj, nullptr, nullptr, Axis::width).value();
  Tape<double> t2;
  auto v = ops::conv2d(t2.constant(x), t2.constant(f.proj.wv->value), std::nullopt, 1, 0).value();
  CHECK(bit_equal(y, v));
}

TEST_CASE("H=1 width attention equals the global oracle") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const std::size_t cin = 1 + seed % 8, W = 2 + 2 * seed;
    Fixture f(cin, 4, W, 100 + seed);
    auto x = random({1, cin, 1, W}, 200 + seed);
    Tape<double> t;
    auto y = axial_attention(t.constant(x), f.proj, nullptr, nullptr, Axis::width).value();
    auto ref = full_self_attention_oracle(x, f.proj.wq->value, f.proj.wk->value, f.proj.wv->value);
    CHECK(max_abs_diff(y, ref) < 1e-8);
  }
}

TEST_CASE("W=1 height attention equals the global oracle") {
  Fixture f(3, 2, 6, 300);
  auto x = random({1, 3, 6, 1}, 301);
  Tape<double> t;
  auto y = axial_attention(t.constant(x), f.proj, nullptr, nullptr, Axis::height).value();
  CHECK(max_abs_diff(y, full_self_attention_oracle(x, f.proj.wq->value, f.proj.wk->value, f.proj.wv->value)) < 1e-8);
}

TEST_CASE("gate reductions are bit-exact") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Fixture f(3, 4, 5, 400 + seed);
    auto x = random({2, 3, 4, 5}, 500 + seed);
    Tape<double> t;
    auto xv = t.constant(x);
    auto plain = axial_attention(xv, f.proj, nullptr, nullptr, Axis::width).value();
    auto eq2 = axial_attention(xv, f.proj, &f.enc, nullptr, Axis::width).value();
    f.gates.assign(1, 1, 1, 1);
    CHECK(bit_equal(axial_attention(xv, f.proj, &f.enc, &f.gates, Axis::width).value(), eq2));
    f.gates.assign(0, 0, 1, 0);
    CHECK(bit_equal(axial_attention(xv, f.proj, &f.enc, &f.gates, Axis::width).value(), plain));
  }
}

TEST_CASE("axial_attention errors") {
  Fixture f(3, 4, 5, 600);
  Tape<double> t;
  auto x = t.constant(random({1, 3, 4, 6}, 601));
  CHECK_THROWS_AS(axial_attention(x, f.proj, &f.enc, nullptr, Axis::width), ShapeError);
  CHECK_THROWS(axial_attention(x, f.proj, nullptr, &f.gates, Axis::width));
  AttnLayerConfig bad;
  bad.channels_in = 4;
  bad.channels_out = 6;
  bad.heads = 4;
  CHECK_THROWS(bad.validate());
  AttnLayerConfig ungated_free{4, 4, 2, true, false};
  CHECK_THROWS(ungated_free.validate());
}

TEST_CASE("gradients reach projections, tables and gates") {
  Fixture f(2, 3, 4, 700);
  f.gates.assign(0.6, 1.3, 0.8, -0.4);
  auto x = random({1, 2, 3, 4}, 701), w = random({1, 3, 3, 4}, 702);
  auto rep = grad_check(
      [&](Tape<double>& t) {
        auto y = axial_attention(t.constant(x), f.proj, &f.enc, &f.gates, Axis::width);
        return ops::sum(ops::mul(y, t.constant(w)));
      },
      f.store.params());
  CHECK(rep.max_rel_error < 1e-7);
  for (const auto& p : rep.per_param) CHECK_MESSAGE(p.checked > 0, p.name);
}

TEST_CASE("multi-head: heads=1 equals a single call, heads=2 equals manual slicing") {
  ParamStore<double> store(9);
  AttnLayerConfig one{3, 4, 1, true, true, Axis::width};
  MultiHeadAxial<double> mha1(store, "one", one, 5);
  auto x = random({2, 3, 2, 5}, 800);
  Tape<double> t;
  auto y1 = mha1.forward(t.constant(x)).value();
  auto ref1 = axial_attention(t.constant(x), mha1.projections(), &mha1.encodings()[0], &mha1.gates()[0], Axis::width);
  CHECK(bit_equal(y1, ref1.value()));

  AttnLayerConfig two{3, 4, 2, true, true, Axis::width};
  MultiHeadAxial<double> mha2(store, "two", two, 5);
  auto y2 = mha2.forward(t.constant(x)).value();
  auto xv = t.constant(x);
  auto proj = [&](Param<double>* w) { return ops::conv2d(xv, t.param(*w), std::nullopt, 1, 0); };
  auto q = proj(mha2.projections().wq), k = proj(mha2.projections().wk), v = proj(mha2.projections().wv);
  const auto& g = mha2.gates()[0];
  for (std::size_t h = 0; h < 2; ++h) {
    const auto& e = mha2.encodings()[h];
    auto part = axial_attention_width(ops::slice_channels(q, 2 * h, 2), ops::slice_channels(k, 2 * h, 2),
                                      ops::slice_channels(v, 2 * h, 2),
                                      std::optional(PositionalVars<double>{t.param(*e.rq), t.param(*e.rk), t.param(*e.rv)}),
                                      std::optional(GateVars<double>{t.param(*g.gq), t.param(*g.gk), t.param(*g.gv1),
                                                                     t.param(*g.gv2)}))
                    .value();
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 10; ++i) CHECK(y2[((n * 4) + 2 * h + c) * 10 + i] == part[(n * 2 + c) * 10 + i]);
  }
}

TEST_CASE("multi-head: zeroed head-0 values with G_V2=0 give zero channels") {
  ParamStore<double> store(10);
  AttnLayerConfig cfg{3, 4, 2, true, true, Axis::width};
  MultiHeadAxial<double> mha(store, "m", cfg, 5);
  auto& wv = mha.projections().wv->value;
  for (std::size_t i = 0; i < 2 * 3; ++i) wv[i] = 0.0;
  mha.gates()[0].gv2->value[0] = 0.0;
  Tape<double> t;
  auto y = mha.forward(t.constant(random({1, 3, 2, 5}, 801))).value();
  for (std::size_t i = 0; i < 2 * 10; ++i) CHECK(y[i] == 0.0);
  bool other_nonzero = false;
  for (std::size_t i = 20; i < 40; ++i) other_nonzero = other_nonzero || y[i] != 0.0;
  CHECK(other_nonzero);
}

TEST_CASE("gated layer: shape, residual identity, stride") {
  ParamStore<double> store(11);
  AttnLayerConfig cfg{4, 4, 2};
  GatedAxialLayer<double> layer(store, "l", cfg, 6, 8, 1);
  auto x = random({2, 4, 6, 8}, 900);
  Tape<double> t;
  CHECK(layer.forward(t.constant(x), ops::NormMode::train).shape() == Shape{2, 4, 6, 8});
  layer.output_weight().value.fill(0.0);
  layer.output_bias().value.fill(0.0);
  CHECK(bit_equal(layer.forward(t.constant(x), ops::NormMode::train).value(), x));

  ParamStore<double> s2(12);
  GatedAxialLayer<double> down(s2, "d", AttnLayerConfig{4, 8, 2}, 16, 16, 2);
  CHECK(down.forward(t.constant(random({1, 4, 16, 16}, 901)), ops::NormMode::train).shape() == Shape{1, 8, 8, 8});
}

TEST_CASE("gated layer gradient check on a 1x4x4x4 input") {
  ParamStore<double> store(13);
  GatedAxialLayer<double> layer(store, "l", AttnLayerConfig{4, 4, 2}, 4, 4, 1);
  SplitMix64 rng(5);
  for (const auto& g : layer.gates())
    for (auto* p : g.all()) p->value[0] = rng.uniform(0.5, 1.5);
  auto x = random({1, 4, 4, 4}, 902), w = random({1, 4, 4, 4}, 903);
  auto rep = grad_check(
      [&](Tape<double>& t) {
        return ops::sum(ops::mul(layer.forward(t.constant(x), ops::NormMode::train), t.constant(w)));
      },
      store.params());
  CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("gate parameter accounting") {
  auto count = [](bool gated, std::size_t heads, bool per_head, bool both_axes) {
    ParamStore<double> s(1);
    AttnLayerConfig c{8, 8, heads, gated, true, Axis::width, per_head};
    MultiHeadAxial<double> a(s, "w", c, 4);
    if (both_axes) {
      c.axis = Axis::height;
      MultiHeadAxial<double> b(s, "h", c, 4);
    }
    return static_cast<long long>(s.scalar_count());
  };
  CHECK(count(true, 1, false, false) - count(false, 1, false, false) == 4);
  CHECK(count(true, 8, true, true) - count(false, 8, true, true) == 64);
  CHECK(count(true, 8, false, true) - count(false, 8, false, true) == 8);
  ParamStore<double> gs(1), us(1);
  GatedAxialLayer<double> gl(gs, "x", AttnLayerConfig{4, 8, 2, true}, 8, 8, 2);
  GatedAxialLayer<double> ul(us, "x", AttnLayerConfig{4, 8, 2, false}, 8, 8, 2);
  CHECK(count_extra_gate_params(gs, us) == 8);
  CHECK(count_extra_gate_params(us, us) == 0);
}

TEST_CASE("MAC counter: exact closed forms") {
  for (std::size_t s : {1u, 2u, 4u, 8u}) {
    auto q = random({1, 3, s, s}, 1), k = random({1, 3, s, s}, 2), v = random({1, 3, s, s}, 3);
    auto r = random({2 * s - 1, 3}, 4);
    MacCounter::reset();
    axial_width_kernel<double>(q, k, v, nullptr, nullptr, nullptr, {});
    CHECK(MacCounter::value() == 2 * s * s * s * 3);
    MacCounter::reset();
    axial_width_kernel<double>(q, k, v, &r, &r, &r, {});
    CHECK(MacCounter::value() == 5 * s * s * s * 3);
    MacCounter::reset();
    full_self_attention_oracle(random({1, 2, s, s}, 5), random({3, 2, 1, 1}, 6), random({3, 2, 1, 1}, 7),
                               random({3, 2, 1, 1}, 8));
    CHECK(MacCounter::value() == 2 * s * s * s * s * 3);
  }
  // rectangular map: one width pass is N*H*W*W*d per term
  MacCounter::reset();
  auto q = random({2, 3, 5, 7}, 9);
  axial_width_kernel<double>(q, q, q, nullptr, nullptr, nullptr, {});
  CHECK(MacCounter::value() == 2ull * 2 * 5 * 7 * 7 * 3);
  MacCounter::reset();
}
