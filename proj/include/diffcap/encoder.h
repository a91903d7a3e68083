#ifndef DIFFCAP_ENCODER_H_
#define DIFFCAP_ENCODER_H_

#include <random>
#include <string>
#include <vector>

#include "diffcap/nn.h"
#include "diffcap/tensor.h"

namespace diffcap {

// Stem conv3x3 to channels[0], then one residual stage per entry of
// channels followed by a final stage of width k. The last log2(image/l)
// stages downsample by 2; any remaining excess is removed by adaptive
// average pooling to l x l.
struct EncoderConfig {
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t blocks_per_stage = 1;
  std::size_t k = 64;
  std::size_t l = 8;
  std::size_t image_size = 64;
};

// Throws std::invalid_argument on an unusable configuration.
void validate(const EncoderConfig& config);

// Spatial side after each stage, in order.
std::vector<std::size_t> stage_sides(const EncoderConfig& config);

template <typename T>
struct ResidualBlockParams {
  Tensor<T> conv1_w, conv1_b;  // [out, in, 3, 3], [out]
  Tensor<T> conv2_w, conv2_b;  // [out, out, 3, 3], [out]
  Tensor<T> proj_w;            // [out, in, 1, 1]; undefined for identity shortcut
  std::size_t stride = 1;
};

// y = conv2(relu(conv1(x))) + shortcut(x)
template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlockParams<T>& p);

template <typename T>
struct FeatureMaps {
  Tensor<T> C;
  Tensor<T> fc;
};

// Both images of a pair. Tensors carry a leading batch axis:
// C is [N, k, l, l] and fc is [N, k].
template <typename T>
struct FeaturePair {
  Tensor<T> C1, C2;
  Tensor<T> fc1, fc2;

  std::size_t batch() const { return fc1.dim(0); }
};

template <typename T>
class Encoder {
 public:
  Encoder(const EncoderConfig& config, std::mt19937_64& rng);

  // [3, H, W] -> C [k, l, l], fc [k]; [N, 3, H, W] -> C [N, k, l, l], fc [N, k].
  FeatureMaps<T> encode(const Tensor<T>& images) const;

  // Encodes both batches in one pass through the shared parameters.
  // Single images ([3, H, W]) give a pair with batch 1.
  FeaturePair<T> encode_pair(const Tensor<T>& images1, const Tensor<T>& images2) const;

  const EncoderConfig& config() const { return config_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  std::vector<ResidualBlockParams<T>>& blocks() { return blocks_; }

 private:
  EncoderConfig config_;
  ParameterStore<T> params_;
  Tensor<T> stem_w_, stem_b_;
  std::vector<ResidualBlockParams<T>> blocks_;
};

// Feature file: "DCFT", version, k, l (u32 little-endian), then C and fc of
// image 1 followed by C and fc of image 2 as float32.
void export_features(const std::string& path, const FeaturePair<float>& pair);
FeaturePair<float> import_features(const std::string& path);
// Also checks the recorded k and l against the model's.
FeaturePair<float> import_features(const std::string& path, std::size_t k, std::size_t l);

}  // namespace diffcap

#endif  // DIFFCAP_ENCODER_H_
