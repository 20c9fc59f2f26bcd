#include "axialseg/params.hpp"

#include <stdexcept>

#include "axialseg/rng.hpp"

namespace axialseg {

template <typename T>
Param<T>& ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (index_.count(name) || buffer_index_.count(name)) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  index_[name] = params_.size();
  params_.emplace_back(name, std::move(value));
  return params_.back();
}

template <typename T>
Param<T>& ParamStore<T>::uniform(const std::string& name, Shape shape, double bound) {
  SplitMix64 rng(derive_seed(seed_, fnv1a64(name)));
  Tensor<T> value(std::move(shape));
  for (auto& x : value.vec()) x = static_cast<T>(rng.uniform(-bound, bound));
  return add(name, std::move(value));
}

template <typename T>
Param<T>& ParamStore<T>::constant(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>(std::move(shape), value));
}

template <typename T>
Tensor<T>& ParamStore<T>::buffer(const std::string& name, Shape shape, T fill) {
  if (index_.count(name) || buffer_index_.count(name)) {
    throw std::invalid_argument("duplicate buffer name '" + name + "'");
  }
  buffer_index_[name] = buffers_.size();
  buffers_.emplace_back(name, Tensor<T>(std::move(shape), fill));
  return buffers_.back().second;
}

template <typename T>
Param<T>* ParamStore<T>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
const Param<T>* ParamStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
Tensor<T>* ParamStore<T>::find_buffer(const std::string& name) {
  auto it = buffer_index_.find(name);
  return it == buffer_index_.end() ? nullptr : &buffers_[it->second].second;
}

template <typename T>
std::vector<Param<T>*> ParamStore<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<const Param<T>*> ParamStore<T>::params() const {
  std::vector<const Param<T>*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ParamStore<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& [name, t] : buffers_) out.emplace_back(name, &t);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ParamStore<T>::buffers() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (const auto& [name, t] : buffers_) out.emplace_back(name, &t);
  return out;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace axialseg
