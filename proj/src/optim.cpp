#include "axialseg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace axialseg {

template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state, const AdamOptions& opt) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Tensor<T>::zeros(p->value.shape()));
      state.v.push_back(Tensor<T>::zeros(p->value.shape()));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) + " params, got " +
                                std::to_string(params.size()));
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    if (!p.trainable) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.shape() != p.value.shape()) {
      throw ShapeError("adam_step: moment shape " + shape_str(m.shape()) + " does not match '" + p.name + "' " +
                       shape_str(p.value.shape()));
    }
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const T g = p.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[j]) / bc1;
      const double vhat = static_cast<double>(v[j]) / bc2;
      p.value[j] -= static_cast<T>(opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
    }
  }
}

template void adam_step(std::span<Param<float>* const>, AdamState<float>&, const AdamOptions&);
template void adam_step(std::span<Param<double>* const>, AdamState<double>&, const AdamOptions&);

}  // namespace axialseg
