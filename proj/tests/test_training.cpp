#include <doctest.h>

#include <cmath>

#include "axialseg/training.hpp"
#include "test_util.hpp"

using namespace axialseg;
using testutil::random;

namespace {

ModelConfig tiny(Variant v = Variant::medt) {
  ModelConfig c = ModelConfig::micro();
  c.variant = v;
  c.seed = 2;
  return c;
}

std::vector<data::Sample> tiny_corpus(std::size_t n) {
  data::SynthSpec spec;
  spec.n_samples = n;
  spec.img_size = 16;
  spec.seed = 4;
  return data::generate(spec);
}

}  // namespace

TEST_CASE("bce: ln 2 at one half, clamp floor, loop oracle") {
  Tape<double> t;
  Tensor<double> half(Shape{2, 3}, 0.5), ones(Shape{2, 3}, 1.0), zeros(Shape{2, 3}, 0.0);
  CHECK(bce_loss(t.constant(half), t.constant(ones)).value()[0] == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(t.constant(half), t.constant(zeros)).value()[0] == doctest::Approx(std::log(2.0)));
  const double floor = -std::log(kBceClamp);
  CHECK(bce_loss(t.constant(zeros), t.constant(ones)).value()[0] == doctest::Approx(floor));
  CHECK(std::isfinite(bce_loss(t.constant(ones), t.constant(zeros)).value()[0]));

  auto q = random({3, 7}, 1, 0.01, 0.99), p = random({3, 7}, 2, 0, 1);
  double ref = 0;
  for (std::size_t i = 0; i < q.numel(); ++i) ref -= p[i] * std::log(q[i]) + (1 - p[i]) * std::log(1 - q[i]);
  ref /= static_cast<double>(q.numel());
  CHECK(bce_loss(t.constant(q), t.constant(p)).value()[0] == doctest::Approx(ref).epsilon(1e-12));
  CHECK_THROWS_AS(bce_loss(t.constant(q), t.constant(Tensor<double>(Shape{7, 3}))), ShapeError);
}

TEST_CASE("bce through a sigmoid has gradient (q - p) / n") {
  Param<double> z("z", random({4, 5}, 3, -3, 3));
  auto p = random({4, 5}, 4, 0, 1);
  Tape<double> t;
  auto q = ops::sigmoid(t.param(z));
  t.backward(bce_loss(q, t.constant(p)));
  for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(z.grad[i] - (q.value()[i] - p[i]) / 20.0) < 1e-6);
}

TEST_CASE("bce gradient is zero inside the clamp") {
  Param<double> q("q", Tensor<double>::from({2}, {0.0, 1e-9}));
  Tape<double> t;
  t.backward(bce_loss(t.param(q), t.constant(Tensor<double>(Shape{2}, 1.0))));
  CHECK(q.grad[0] == 0.0);
  CHECK(q.grad[1] == 0.0);
}

TEST_CASE("f1 and iou on hand cases") {
  Tensor<double> a(Shape{4}), b(Shape{4});
  auto m = f1_iou(a, b);
  CHECK(m.f1 == 1.0);
  CHECK(m.iou == 1.0);
  a[0] = a[1] = 1;
  b[1] = b[2] = 1;
  m = f1_iou(a, b);
  CHECK(m.f1 == doctest::Approx(0.5));
  CHECK(m.iou == doctest::Approx(1.0 / 3.0));
  m = f1_iou(b, b);
  CHECK(m.f1 == 1.0);
  Tensor<double> none(Shape{4});
  m = f1_iou(none, b);
  CHECK(m.f1 == 0.0);
  CHECK(m.iou == 0.0);
  Tensor<double> edge(Shape{4}, 0.5);
  CHECK(confusion(edge, b).tp == 2);
  CHECK(confusion(edge, b).fp == 2);
  CHECK_THROWS_AS(f1_iou(Tensor<double>(Shape{3}), b), ShapeError);
}

TEST_CASE("f1 and iou satisfy iou = f1 / (2 - f1)") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto p = random({64}, s, 0, 1), g = random({64}, s + 100, 0, 1);
    auto m = f1_iou(p, g);
    CHECK(m.iou == doctest::Approx(m.f1 / (2 - m.f1)));
    CHECK(m.iou <= m.f1);
  }
}

TEST_CASE("gate schedule freezes gates before the threshold") {
  Model<double> m(tiny());
  REQUIRE_FALSE(m.gates().empty());
  gate_schedule(0, m, 10);
  for (const auto& g : m.gates())
    for (auto* p : g.all()) CHECK_FALSE(p->trainable);
  gate_schedule(9, m, 10);
  CHECK_FALSE(m.gates()[0].gq->trainable);
  gate_schedule(10, m, 10);
  for (const auto& g : m.gates())
    for (auto* p : g.all()) CHECK(p->trainable);
  gate_schedule(0, m, 0);
  CHECK(m.gates()[0].gq->trainable);
}

TEST_CASE("frozen gates stay fixed while the rest trains") {
  Model<float> m(tiny());
  auto corpus = tiny_corpus(2);
  std::vector<float> before;
  for (const auto& g : m.gates())
    for (auto* p : g.all()) before.push_back(p->value[0]);
  auto conv_before = m.fuse_weight().value;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.gate_freeze_epochs = 5;
  train(m, corpus, cfg);
  std::size_t k = 0;
  for (const auto& g : m.gates())
    for (auto* p : g.all()) CHECK(p->value[0] == before[k++]);
  CHECK_FALSE(bit_equal(m.fuse_weight().value, conv_before));

  cfg.gate_freeze_epochs = 0;
  cfg.epochs = 1;
  train(m, corpus, cfg);
  bool moved = false;
  k = 0;
  for (const auto& g : m.gates())
    for (auto* p : g.all()) moved = moved || p->value[0] != before[k++];
  CHECK(moved);
}

TEST_CASE("zero epochs leaves the model untouched") {
  Model<float> m(tiny());
  auto w = m.fuse_weight().value;
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK(train(m, tiny_corpus(1), cfg).empty());
  CHECK(train(m, {}, cfg).empty());
  CHECK(bit_equal(m.fuse_weight().value, w));
  cfg.epochs = 1;
  CHECK_THROWS(train(m, {}, cfg));
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("training is bit-reproducible and the loss falls") {
  auto corpus = tiny_corpus(3);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 2;
  cfg.lr = 1e-2;
  cfg.gate_freeze_epochs = 2;
  cfg.seed = 1;
  Model<float> a(tiny()), b(tiny());
  std::vector<std::string> lines;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { lines.push_back(format_epoch_line(r)); };
  auto ha = train(a, corpus, cfg, hooks);
  auto hb = train(b, corpus, cfg);
  REQUIRE(ha.size() == 6);
  CHECK(lines.size() == 6);
  CHECK(lines[0].rfind("epoch=0 loss=", 0) == 0);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(ha[e].epoch == e);
    CHECK(ha[e].loss == hb[e].loss);
    CHECK(ha[e].f1 == hb[e].f1);
  }
  for (std::size_t i = 0; i < a.store().params().size(); ++i)
    CHECK(bit_equal(a.store().params()[i]->value, b.store().params()[i]->value));
  CHECK(ha.back().loss < ha.front().loss);

  auto ea = evaluate(a, corpus), eb = evaluate(a, corpus);
  CHECK(ea.per_image.size() == 3);
  CHECK(ea.predictions.size() == 3);
  CHECK(ea.f1_mean == eb.f1_mean);
  CHECK(bit_equal(ea.predictions[1], eb.predictions[1]));
}

TEST_CASE("epoch line format") {
  EpochRecord r{3, 0.25, 0.5, 1.0 / 3.0};
  CHECK(format_epoch_line(r) == "epoch=3 loss=0.250000 f1=0.500000 iou=0.333333");
}

TEST_CASE("make_batch stacks samples in order") {
  auto corpus = tiny_corpus(3);
  auto [x, y] = make_batch<double>(corpus, {2, 0});
  CHECK(x.shape() == Shape{2, 1, 16, 16});
  CHECK(x[0] == static_cast<double>(corpus[2].image[0]));
  CHECK(y[256 + 5] == static_cast<double>(corpus[0].mask[5]));
  CHECK_THROWS(make_batch<double>(corpus, {}));
}
