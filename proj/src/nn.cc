#include "diffcap/nn.h"

#include <cmath>
#include <stdexcept>

namespace diffcap {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ counter);
}

template <typename T>
void ParameterStore<T>::check_unique(const std::string& name) const {
  for (const auto& list : {&params_, &buffers_}) {
    for (const auto& p : *list) {
      if (p.name == name) throw std::logic_error("duplicate parameter name: " + name);
    }
  }
}

template <typename T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Tensor<T> tensor) {
  check_unique(name);
  tensor.set_requires_grad(true);
  params_.push_back({name, tensor});
  return tensor;
}

template <typename T>
Tensor<T> ParameterStore<T>::add_buffer(const std::string& name, Tensor<T> tensor) {
  check_unique(name);
  buffers_.push_back({name, tensor});
  return tensor;
}

template <typename T>
void ParameterStore<T>::merge(const std::string& prefix, const ParameterStore& other) {
  for (const auto& p : other.params_) {
    check_unique(prefix + "." + p.name);
    params_.push_back({prefix + "." + p.name, p.tensor});
  }
  for (const auto& b : other.buffers_) {
    check_unique(prefix + "." + b.name);
    buffers_.push_back({prefix + "." + b.name, b.tensor});
  }
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) {
    if (p.tensor.has_grad()) p.tensor.zero_grad();
  }
}

template <typename T>
void ParameterStore<T>::set_trainable(bool trainable) {
  for (auto& p : params_) p.tensor.set_requires_grad(trainable);
}

template <typename T>
Tensor<T> he_normal(std::mt19937_64& rng, Shape shape, std::size_t fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> xavier_uniform(std::mt19937_64& rng, Shape shape, std::size_t fan_in,
                         std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(v));
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> he_normal(std::mt19937_64&, Shape, std::size_t);
template Tensor<double> he_normal(std::mt19937_64&, Shape, std::size_t);
template Tensor<float> xavier_uniform(std::mt19937_64&, Shape, std::size_t, std::size_t);
template Tensor<double> xavier_uniform(std::mt19937_64&, Shape, std::size_t, std::size_t);

}  // namespace diffcap
