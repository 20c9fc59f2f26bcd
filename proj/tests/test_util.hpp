#pragma once

#include <cstdint>

#include "axialseg/rng.hpp"
#include "axialseg/tensor.hpp"

namespace testutil {

template <typename T = double>
axialseg::Tensor<T> random(axialseg::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  axialseg::Tensor<T> t(std::move(shape));
  axialseg::SplitMix64 rng(seed);
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace testutil
