#ifndef DIFFCAP_FUSION_H_
#define DIFFCAP_FUSION_H_

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "diffcap/encoder.h"
#include "diffcap/nn.h"
#include "diffcap/ops.h"

namespace diffcap {

enum class FusionTactic { kConcat, kLinear, kFeatureSharing, kHyperConv };

std::string fusion_name(FusionTactic tactic);  // "tc", "lnn", "fsn", "hc"
FusionTactic parse_fusion(std::string_view name);

struct FusionConfig {
  FusionTactic tactic = FusionTactic::kHyperConv;
  std::size_t k = 64;
  std::size_t l = 8;
  std::size_t m = 128;
  std::size_t hc_layers = 2;
};

// Length of r for the configured tactic: 2k, k, m or k.
std::size_t fused_size(const FusionConfig& config);

// Annotation count used when none is configured: 16 for hc (clamped to
// l*l), 1 otherwise.
std::size_t default_annotation_count(const FusionConfig& config);

// r is [N, |r|]. spatial is [N, k, l, l] for hc and undefined otherwise.
template <typename T>
struct FusedRepresentation {
  Tensor<T> r;
  Tensor<T> spatial;
  FusionTactic tactic = FusionTactic::kConcat;
};

template <typename T>
struct HyperConvLayer {
  Tensor<T> kernel;  // [out, in, 1, 1]
  Tensor<T> gamma, beta;
  BatchNormStats<T> stats;
};

template <typename T>
FusedRepresentation<T> fuse_tc(const FeaturePair<T>& fp);

template <typename T>
FusedRepresentation<T> fuse_lnn(const FeaturePair<T>& fp, const Tensor<T>& W, const Tensor<T>& b);

// u = fc1 W1 + b1, v = fc2 W2 + b2, r = relu(bilinear_form(u, M, v)).
template <typename T>
FusedRepresentation<T> fuse_fsn(const FeaturePair<T>& fp, const Tensor<T>& W1,
                                const Tensor<T>& b1, const Tensor<T>& W2, const Tensor<T>& b2,
                                const Tensor<T>& M);

template <typename T>
FusedRepresentation<T> fuse_hc(const FeaturePair<T>& fp, std::vector<HyperConvLayer<T>>& layers,
                               bool training);

// Annotation grid [N, d, w]; row i is the annotation vector rho_i.
template <typename T>
Tensor<T> annotations(const FusedRepresentation<T>& fr, std::size_t d);

template <typename T>
class Fusion {
 public:
  Fusion(const FusionConfig& config, std::mt19937_64& rng);

  FusedRepresentation<T> fuse(const FeaturePair<T>& fp, bool training);

  const FusionConfig& config() const { return config_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  std::vector<HyperConvLayer<T>>& hc_layers() { return hc_layers_; }

 private:
  FusionConfig config_;
  ParameterStore<T> params_;
  Tensor<T> W_, b_;
  Tensor<T> W1_, b1_, W2_, b2_, M_;
  std::vector<HyperConvLayer<T>> hc_layers_;
};

}  // namespace diffcap

#endif  // DIFFCAP_FUSION_H_
