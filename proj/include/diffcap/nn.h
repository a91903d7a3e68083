#ifndef DIFFCAP_NN_H_
#define DIFFCAP_NN_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diffcap/tensor.h"

namespace diffcap {

// splitmix64 finalizer over (seed, stream, counter). Every random stream in
// the pipeline is derived from the single run seed this way:
//   stream 1: parameter initialization
//   stream 2: epoch shuffling            (counter = epoch)
//   stream 3: augmentation               (counter = epoch)
//   stream 4: referee position coins     (counter = epoch, or 0 for evaluation)
//   stream 5: identical-pair sampling
//   stream 6: synthetic corpus generation
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0);

enum class SeedStream : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kAugment = 3,
  kRefereeCoin = 4,
  kIdenticalPairs = 5,
  kSynthetic = 6,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, SeedStream stream, std::uint64_t counter = 0) {
  return std::mt19937_64(derive_seed(seed, static_cast<std::uint64_t>(stream), counter));
}

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Owns the named trainable parameters and persistent buffers (batch-norm
// running statistics) of one model. Registration order is the
// serialization order.
template <typename T>
class ParameterStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> tensor);
  Tensor<T> add_buffer(const std::string& name, Tensor<T> tensor);
  // Adopts every entry of `other` under "<prefix>.<name>".
  void merge(const std::string& prefix, const ParameterStore& other);

  const std::vector<NamedTensor<T>>& parameters() const { return params_; }
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }
  std::size_t parameter_count() const;
  void zero_grad();
  void set_trainable(bool trainable);

 private:
  void check_unique(const std::string& name) const;
  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
};

// He (Kaiming) normal: N(0, 2 / fan_in).
template <typename T>
Tensor<T> he_normal(std::mt19937_64& rng, Shape shape, std::size_t fan_in);

// Glorot uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform(std::mt19937_64& rng, Shape shape, std::size_t fan_in,
                         std::size_t fan_out);

}  // namespace diffcap

#endif  // DIFFCAP_NN_H_
