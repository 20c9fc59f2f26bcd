#pragma once

#include <optional>
#include <span>
#include <vector>
#include <type_traits>

#include "axialseg/autograd.hpp"
#include "axialseg/tensor.hpp"

// Differentiable primitives. Every op validates shapes, computes its value
// eagerly and records a backward rule on the inputs' tape. Binary ops accept
// equal shapes or a single-element operand; nothing else broadcasts.
namespace axialseg::ops {

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> relu(Var<T> a);
template <typename T>
Var<T> sigmoid(Var<T> a);

template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);

/// [*, m, k] x [*, k, n] -> [*, m, n]. Leading dims must match, or one side has none / all ones.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

/// Max-subtracted softmax along `axis`.
template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis);

/// Cross-correlation. x [N,Cin,H,W], w [Cout,Cin,kh,kw], optional bias [Cout].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride, std::size_t padding);

enum class NormMode { train, eval };

/// Running statistics owned by the model; updated in place in train mode.
template <typename T>
struct RunningStats {
  Tensor<T>* mean = nullptr;
  Tensor<T>* var = nullptr;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

/// Per-channel normalisation over (N,H,W). Train mode uses biased batch
/// variance for the output and folds the unbiased variance into the running
/// stats with momentum 0.1.
template <typename T>
Var<T> batchnorm2d(Var<T> x, Var<T> gamma, Var<T> beta, RunningStats<T> stats, NormMode mode,
                   double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

/// Bilinear x2 with half-pixel sample centres (align_corners = false).
template <typename T>
Var<T> upsample2x(Var<T> x);

/// [N,C,H,W] -> [N,C,W,H].
template <typename T>
Var<T> transpose_hw(Var<T> x);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

template <typename T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t count);
template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

/// Spatial window [top, top+h) x [left, left+w) of a rank-4 tensor.
template <typename T>
Var<T> crop(Var<T> x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

/// Inverse of g x g row-major cropping: places equally shaped tiles into one map.
template <typename T>
Var<T> tile_grid(std::span<const Var<T>> tiles, std::size_t grid);

// Plain kernels shared with non-differentiable callers.
namespace kernel {

/// Weights for 1-D bilinear resampling of `in` samples to `out` samples.
struct LinearTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};
LinearTaps bilinear_taps(std::size_t in, std::size_t out);

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::size_t stride,
                 std::size_t padding);

}  // namespace kernel

}  // namespace axialseg::ops
