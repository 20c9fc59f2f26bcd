#include "axialseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "axialseg/optim.hpp"
#include "axialseg/rng.hpp"

namespace axialseg {

template <typename T>
Var<T> bce_loss(Var<T> pred, Var<T> target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("bce_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const auto& pv = pred.value();
  const auto& tv = target.value();
  const T lo = static_cast<T>(kBceClamp), hi = T(1) - static_cast<T>(kBceClamp);
  const std::size_t n = pv.numel();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T q = std::clamp(pv[i], lo, hi);
    total += -(tv[i] * std::log(q) + (T(1) - tv[i]) * std::log(T(1) - q));
  }
  return pred.tape()->record(
      "bce_loss", Tensor<T>::scalar(total / static_cast<T>(n)), {pred, target},
      [pred, target, lo, hi, n](Tape<T>& t, const Tensor<T>& g) {
        const auto& pv = pred.value();
        const auto& tv = target.value();
        const T scale = g[0] / static_cast<T>(n);
        if (t.needs_grad(pred)) {
          auto& gp = t.grad(pred);
          for (std::size_t i = 0; i < n; ++i) {
            if (pv[i] < lo || pv[i] > hi) continue;  // clamped region is flat
            const T q = pv[i];
            gp[i] += scale * (q - tv[i]) / (q * (T(1) - q));
          }
        }
        if (t.needs_grad(target)) {
          auto& gt = t.grad(target);
          for (std::size_t i = 0; i < n; ++i) {
            const T q = std::clamp(pv[i], lo, hi);
            gt[i] += scale * (std::log(T(1) - q) - std::log(q));
          }
        }
      });
}

Metrics Confusion::scores() const {
  Metrics m;
  const double denom_f1 = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
  const double denom_iou = static_cast<double>(tp + fp + fn);
  m.f1 = denom_f1 == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / denom_f1;
  m.iou = denom_iou == 0 ? 1.0 : static_cast<double>(tp) / denom_iou;
  return m;
}

template <typename T>
Confusion confusion(const Tensor<T>& pred, const Tensor<T>& target, double threshold) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("f1_iou: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  Confusion c;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const bool p = static_cast<double>(pred[i]) >= threshold;
    const bool g = static_cast<double>(target[i]) >= 0.5;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
  }
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (eval_every == 0) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
}

template <typename T>
void gate_schedule(std::size_t epoch, Model<T>& model, std::size_t freeze_epochs) {
  const bool on = epoch >= freeze_epochs;
  for (const auto& g : model.gates()) g.set_trainable(on);
}

std::string format_epoch_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f f1=%.6f iou=%.6f", r.epoch, r.loss, r.f1, r.iou);
  return buf;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<data::Sample>& samples,
                                           const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw std::invalid_argument("make_batch: empty batch");
  const Shape s = samples.at(idx[0]).image.shape();
  const std::size_t per = shape_numel(s);
  Tensor<T> x(Shape{idx.size(), s[1], s[2], s[3]});
  Tensor<T> y(Shape{idx.size(), s[1], s[2], s[3]});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& smp = samples.at(idx[b]);
    if (smp.image.shape() != s || smp.mask.shape() != s) {
      throw ShapeError("make_batch: sample '" + smp.id + "' shape " + shape_str(smp.image.shape()) +
                       " differs from " + shape_str(s));
    }
    for (std::size_t i = 0; i < per; ++i) {
      x[b * per + i] = static_cast<T>(smp.image[i]);
      y[b * per + i] = static_cast<T>(smp.mask[i]);
    }
  }
  return {std::move(x), std::move(y)};
}

template <typename T>
EvalSummary evaluate(Model<T>& model, const std::vector<data::Sample>& samples, double threshold) {
  EvalSummary out;
  Confusion pooled;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [x, y] = make_batch<T>(samples, {i});
    Tape<T> tape(false);
    Var<T> pred = model.forward(tape.constant(x), ops::NormMode::eval);
    Var<T> loss = bce_loss(pred, tape.constant(y));
    Confusion c = confusion(pred.value(), y, threshold);
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    Metrics m = c.scores();
    m.loss = static_cast<double>(loss.value()[0]);
    out.f1_mean += m.f1;
    out.iou_mean += m.iou;
    out.loss += m.loss;
    out.per_image.push_back(m);
    out.predictions.push_back(pred.value().template cast<float>());
  }
  if (!samples.empty()) {
    const double n = static_cast<double>(samples.size());
    out.f1_mean /= n;
    out.iou_mean /= n;
    out.loss /= n;
  }
  const Metrics pm = pooled.scores();
  out.f1_pooled = pm.f1;
  out.iou_pooled = pm.iou;
  return out;
}

template <typename T>
std::vector<EpochRecord> train(Model<T>& model, const std::vector<data::Sample>& dataset, const TrainConfig& cfg,
                               const TrainHooks& hooks) {
  cfg.validate();
  std::vector<EpochRecord> history;
  if (cfg.epochs == 0) return history;
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  auto params = model.store().params();
  AdamState<T> adam;
  AdamOptions opt;
  opt.lr = cfg.lr;
  model.store().zero_grad();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    gate_schedule(epoch, model, cfg.gate_freeze_epochs);
    const auto order = data::shuffled_indices(dataset.size(), derive_seed(cfg.seed, epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      auto [x, y] = make_batch<T>(dataset, idx);
      Tape<T> tape;
      Var<T> pred = model.forward(tape.constant(x), ops::NormMode::train);
      Var<T> loss = bce_loss(pred, tape.constant(y));
      tape.backward(loss);
      const double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv)) {
        std::string culprit = "none";
        for (auto* p : params) {
          if (!all_finite(p->grad)) {
            culprit = p->name;
            break;
          }
        }
        throw NonFiniteError("non-finite loss at epoch " + std::to_string(epoch) +
                             "; first non-finite param grad: " + culprit);
      }
      adam_step<T>(params, adam, opt);
      model.store().zero_grad();

      loss_sum += lv * static_cast<double>(idx.size());
      const std::size_t per = shape_numel(dataset[idx[0]].image.shape());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        Tensor<T> pb(Shape{per}, std::vector<T>(pred.value().data() + b * per, pred.value().data() + (b + 1) * per));
        Tensor<T> yb(Shape{per}, std::vector<T>(y.data() + b * per, y.data() + (b + 1) * per));
        const Metrics m = f1_iou(pb, yb);
        rec.f1 += m.f1;
        rec.iou += m.iou;
      }
    }
    const double n = static_cast<double>(dataset.size());
    rec.loss = loss_sum / n;
    rec.f1 /= n;
    rec.iou /= n;
    history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return history;
}

#define AXIALSEG_INSTANTIATE_TRAINING(T)                                                                       \
  template Var<T> bce_loss(Var<T>, Var<T>);                                                                  \
  template Confusion confusion(const Tensor<T>&, const Tensor<T>&, double);                                  \
  template void gate_schedule(std::size_t, Model<T>&, std::size_t);                                          \
  template std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<data::Sample>&,                      \
                                                      const std::vector<std::size_t>&);                      \
  template EvalSummary evaluate(Model<T>&, const std::vector<data::Sample>&, double);                        \
  template std::vector<EpochRecord> train(Model<T>&, const std::vector<data::Sample>&, const TrainConfig&,   \
                                          const TrainHooks&);

AXIALSEG_INSTANTIATE_TRAINING(float)
AXIALSEG_INSTANTIATE_TRAINING(double)

}  // namespace axialseg
