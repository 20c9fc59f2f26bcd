#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "axialseg/autograd.hpp"

namespace axialseg {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments per param, aligned with the param list given to adam_step.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update. Params with trainable == false are skipped
/// (their moments are left alone). Grads are not cleared.
template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state, const AdamOptions& opt = {});

extern template void adam_step(std::span<Param<float>* const>, AdamState<float>&, const AdamOptions&);
extern template void adam_step(std::span<Param<double>* const>, AdamState<double>&, const AdamOptions&);

}  // namespace axialseg
