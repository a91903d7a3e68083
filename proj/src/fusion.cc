#include "diffcap/fusion.h"

#include <cmath>
#include <stdexcept>

namespace diffcap {

std::string fusion_name(FusionTactic tactic) {
  switch (tactic) {
    case FusionTactic::kConcat: return "tc";
    case FusionTactic::kLinear: return "lnn";
    case FusionTactic::kFeatureSharing: return "fsn";
    case FusionTactic::kHyperConv: return "hc";
  }
  return "?";
}

FusionTactic parse_fusion(std::string_view name) {
  if (name == "tc") return FusionTactic::kConcat;
  if (name == "lnn") return FusionTactic::kLinear;
  if (name == "fsn") return FusionTactic::kFeatureSharing;
  if (name == "hc") return FusionTactic::kHyperConv;
  throw std::invalid_argument("unknown fusion tactic '" + std::string(name) +
                              "' (expected tc, lnn, fsn or hc)");
}

std::size_t fused_size(const FusionConfig& c) {
  switch (c.tactic) {
    case FusionTactic::kConcat: return 2 * c.k;
    case FusionTactic::kFeatureSharing: return c.m;
    default: return c.k;
  }
}

std::size_t default_annotation_count(const FusionConfig& c) {
  if (c.tactic != FusionTactic::kHyperConv) return 1;
  const std::size_t g = std::min<std::size_t>(4, c.l);
  return g * g;
}

namespace {

template <typename T>
void check_pair(const FeaturePair<T>& fp) {
  if (fp.fc1.rank() != 2 || fp.fc1.shape() != fp.fc2.shape()) {
    throw ShapeError("fusion expects fc1, fc2 as matching [N x k], got " +
                     shape_str(fp.fc1.shape()) + " and " + shape_str(fp.fc2.shape()));
  }
}

}  // namespace

template <typename T>
FusedRepresentation<T> fuse_tc(const FeaturePair<T>& fp) {
  check_pair(fp);
  return {concat(fp.fc1, fp.fc2, 1), Tensor<T>(), FusionTactic::kConcat};
}

template <typename T>
FusedRepresentation<T> fuse_lnn(const FeaturePair<T>& fp, const Tensor<T>& W, const Tensor<T>& b) {
  check_pair(fp);
  return {relu(affine(concat(fp.fc1, fp.fc2, 1), W, b)), Tensor<T>(), FusionTactic::kLinear};
}

template <typename T>
FusedRepresentation<T> fuse_fsn(const FeaturePair<T>& fp, const Tensor<T>& W1,
                                const Tensor<T>& b1, const Tensor<T>& W2, const Tensor<T>& b2,
                                const Tensor<T>& M) {
  check_pair(fp);
  Tensor<T> u = affine(fp.fc1, W1, b1);
  Tensor<T> v = affine(fp.fc2, W2, b2);
  return {relu(bilinear_form(u, M, v)), Tensor<T>(), FusionTactic::kFeatureSharing};
}

template <typename T>
FusedRepresentation<T> fuse_hc(const FeaturePair<T>& fp, std::vector<HyperConvLayer<T>>& layers,
                               bool training) {
  if (fp.C1.rank() != 4 || fp.C1.shape() != fp.C2.shape()) {
    throw ShapeError("fuse_hc expects matching [N x k x l x l] maps, got " +
                     shape_str(fp.C1.shape()) + " and " + shape_str(fp.C2.shape()));
  }
  if (layers.empty()) throw std::invalid_argument("fuse_hc needs at least one layer");
  Tensor<T> x = concat(fp.C1, fp.C2, 1);
  BatchNormOptions bn;
  bn.training = training;
  for (auto& layer : layers) {
    x = conv2d(x, layer.kernel, Tensor<T>());
    x = relu(batch_norm(x, layer.gamma, layer.beta, layer.stats, bn));
  }
  const std::size_t n = x.dim(0), k = x.dim(1);
  return {reshape(avg_pool2d(x, 1, 1), {n, k}), x, FusionTactic::kHyperConv};
}

template <typename T>
Tensor<T> annotations(const FusedRepresentation<T>& fr, std::size_t d) {
  if (d == 0) throw std::invalid_argument("annotation count d must be >= 1");
  const std::size_t n = fr.r.dim(0);
  if (fr.tactic == FusionTactic::kHyperConv) {
    const std::size_t g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
    const std::size_t l = fr.spatial.dim(2), k = fr.spatial.dim(1);
    if (g * g != d) {
      throw std::invalid_argument("hc annotation count d=" + std::to_string(d) +
                                  " is not a perfect square");
    }
    if (g > l) {
      throw std::invalid_argument("hc annotation grid " + std::to_string(g) +
                                  " exceeds map side l=" + std::to_string(l));
    }
    Tensor<T> pooled = g == l ? fr.spatial : avg_pool2d(fr.spatial, g, g);
    return transpose(reshape(pooled, {n, k, d}));
  }
  const std::size_t len = fr.r.dim(1);
  if (len % d != 0) {
    throw std::invalid_argument("annotation count d=" + std::to_string(d) +
                                " does not divide |r|=" + std::to_string(len));
  }
  return reshape(fr.r, {n, d, len / d});
}

template <typename T>
Fusion<T>::Fusion(const FusionConfig& config, std::mt19937_64& rng) : config_(config) {
  const std::size_t k = config_.k, m = config_.m;
  if (k == 0 || config_.l == 0) throw std::invalid_argument("fusion k and l must be positive");
  switch (config_.tactic) {
    case FusionTactic::kConcat:
      break;
    case FusionTactic::kLinear:
      W_ = params_.add("lnn.W", he_normal<T>(rng, {2 * k, k}, 2 * k));
      b_ = params_.add("lnn.b", Tensor<T>::zeros({k}));
      break;
    case FusionTactic::kFeatureSharing:
      if (m == 0) throw std::invalid_argument("fsn needs m >= 1");
      W1_ = params_.add("fsn.W1", xavier_uniform<T>(rng, {k, m}, k, m));
      b1_ = params_.add("fsn.b1", Tensor<T>::zeros({m}));
      W2_ = params_.add("fsn.W2", xavier_uniform<T>(rng, {k, m}, k, m));
      b2_ = params_.add("fsn.b2", Tensor<T>::zeros({m}));
      M_ = params_.add("fsn.M", he_normal<T>(rng, {m, m, m}, m * m));
      break;
    case FusionTactic::kHyperConv:
      if (config_.hc_layers == 0) throw std::invalid_argument("hc needs >= 1 layer");
      for (std::size_t i = 0; i < config_.hc_layers; ++i) {
        const std::size_t in = i == 0 ? 2 * k : k;
        const std::string name = "hc.layer" + std::to_string(i);
        HyperConvLayer<T> layer;
        layer.kernel = params_.add(name + ".w", he_normal<T>(rng, {k, in, 1, 1}, in));
        layer.gamma = params_.add(name + ".gamma", Tensor<T>::full({k}, T(1)));
        layer.beta = params_.add(name + ".beta", Tensor<T>::zeros({k}));
        layer.stats = BatchNormStats<T>::create(k);
        params_.add_buffer(name + ".running_mean", layer.stats.running_mean);
        params_.add_buffer(name + ".running_var", layer.stats.running_var);
        hc_layers_.push_back(layer);
      }
      break;
  }
}

template <typename T>
FusedRepresentation<T> Fusion<T>::fuse(const FeaturePair<T>& fp, bool training) {
  switch (config_.tactic) {
    case FusionTactic::kConcat: return fuse_tc(fp);
    case FusionTactic::kLinear: return fuse_lnn(fp, W_, b_);
    case FusionTactic::kFeatureSharing: return fuse_fsn(fp, W1_, b1_, W2_, b2_, M_);
    case FusionTactic::kHyperConv: return fuse_hc(fp, hc_layers_, training);
  }
  throw std::logic_error("unreachable fusion tactic");
}

#define DIFFCAP_INSTANTIATE_FUSION(T)                                                         \
  template FusedRepresentation<T> fuse_tc(const FeaturePair<T>&);                            \
  template FusedRepresentation<T> fuse_lnn(const FeaturePair<T>&, const Tensor<T>&,          \
                                           const Tensor<T>&);                                \
  template FusedRepresentation<T> fuse_fsn(const FeaturePair<T>&, const Tensor<T>&,          \
                                           const Tensor<T>&, const Tensor<T>&,               \
                                           const Tensor<T>&, const Tensor<T>&);              \
  template FusedRepresentation<T> fuse_hc(const FeaturePair<T>&,                             \
                                          std::vector<HyperConvLayer<T>>&, bool);            \
  template Tensor<T> annotations(const FusedRepresentation<T>&, std::size_t);                \
  template class Fusion<T>;

DIFFCAP_INSTANTIATE_FUSION(float)
DIFFCAP_INSTANTIATE_FUSION(double)

}  // namespace diffcap
