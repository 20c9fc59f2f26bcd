#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "axialseg/autograd.hpp"
#include "axialseg/tensor.hpp"

namespace axialseg {

/// Owns every learnable Param and non-learnable buffer (batchnorm running stats)
/// of a model. Insertion order is preserved so enumeration is deterministic,
/// and element addresses are stable for the store's lifetime.
///
/// Random initialisation draws from a SplitMix64 stream seeded by
/// (model seed, parameter name), so two models that share a parameter name and
/// seed get bit-identical initial values regardless of build order.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Param<T>& add(const std::string& name, Tensor<T> value);
  /// uniform(-bound, +bound).
  Param<T>& uniform(const std::string& name, Shape shape, double bound);
  Param<T>& constant(const std::string& name, Shape shape, T value);
  Tensor<T>& buffer(const std::string& name, Shape shape, T fill);

  Param<T>* find(const std::string& name);
  const Param<T>* find(const std::string& name) const;
  Tensor<T>* find_buffer(const std::string& name);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  std::vector<std::pair<std::string, const Tensor<T>*>> buffers() const;

  /// Total scalar count over learnable params (buffers excluded).
  std::size_t scalar_count() const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::deque<Param<T>> params_;
  std::map<std::string, std::size_t> index_;
  std::deque<std::pair<std::string, Tensor<T>>> buffers_;
  std::map<std::string, std::size_t> buffer_index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace axialseg
