#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "axialseg/autograd.hpp"
#include "axialseg/data.hpp"
#include "axialseg/model.hpp"

namespace axialseg {

inline constexpr double kBceClamp = 1e-7;

/// Mean over pixels of -[p log q + (1 - p) log(1 - q)] with q clamped to [1e-7, 1 - 1e-7].
template <typename T>
Var<T> bce_loss(Var<T> pred, Var<T> target);

struct Metrics {
  double f1 = 0;
  double iou = 0;
  double loss = 0;
};

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  Metrics scores() const;
};

/// Pixel confusion counts after thresholding pred at `threshold` (pred >= threshold is foreground).
template <typename T>
Confusion confusion(const Tensor<T>& pred, const Tensor<T>& target, double threshold = 0.5);

/// F1 = 2TP/(2TP+FP+FN), IoU = TP/(TP+FP+FN); both 1 when prediction and mask are empty.
template <typename T>
Metrics f1_iou(const Tensor<T>& pred, const Tensor<T>& target, double threshold = 0.5) {
  return confusion(pred, target, threshold).scores();
}

struct TrainConfig {
  std::size_t epochs = 400;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  std::size_t gate_freeze_epochs = 10;
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;

  void validate() const;
};

/// Gates train only from epoch `freeze_epochs` onwards.
template <typename T>
void gate_schedule(std::size_t epoch, Model<T>& model, std::size_t freeze_epochs);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0;
  double f1 = 0;   // mean per-image F1 of this epoch's training predictions
  double iou = 0;
};

/// `epoch=<n> loss=<f> f1=<f> iou=<f>`
std::string format_epoch_line(const EpochRecord& r);

struct EvalSummary {
  double f1_mean = 0, iou_mean = 0;      // per image, averaged
  double f1_pooled = 0, iou_pooled = 0;  // one confusion over every pixel
  double loss = 0;
  std::vector<Metrics> per_image;
  std::vector<Tensor<float>> predictions;
};

/// Eval-mode predictions and metrics for every sample.
template <typename T>
EvalSummary evaluate(Model<T>& model, const std::vector<data::Sample>& samples, double threshold = 0.5);

/// Training aborted on a non-finite loss.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  /// Called after each epoch's record is complete.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Epoch loop: seeded shuffle, mini-batches of forward / BCE / backward / Adam,
/// with the gate freeze applied at the start of every epoch.
template <typename T>
std::vector<EpochRecord> train(Model<T>& model, const std::vector<data::Sample>& dataset, const TrainConfig& cfg,
                               const TrainHooks& hooks = {});

/// Stacks samples [idx...] into image and mask batches [B,1,I,I].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<data::Sample>& samples,
                                           const std::vector<std::size_t>& idx);

}  // namespace axialseg
