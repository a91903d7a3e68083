#ifndef DIFFCAP_OPS_H_
#define DIFFCAP_OPS_H_

#include <span>
#include <vector>

#include "diffcap/tensor.h"

// Differentiable operations. Every op records a backward function when any
// input is tracked and grad mode is on. Instantiated for float and double.
namespace diffcap {

// Elementwise with numpy-style right-aligned broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);

// Full reductions return shape [1].
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
// Axis reductions drop the reduced axis.
template <typename T> Tensor<T> sum(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> mean(const Tensor<T>& x, std::size_t axis);
// Gradient goes to the first maximal element along the axis.
template <typename T> Tensor<T> max_over_axis(const Tensor<T>& x, std::size_t axis);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  return concat<T>(std::vector<Tensor<T>>{a, b}, axis);
}
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                std::size_t length);
// Stacks equally shaped tensors along a new leading axis.
template <typename T> Tensor<T> stack(const std::vector<Tensor<T>>& parts);
// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);

// [p x q] * [q x r] -> [p x r]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// [B x p x q] * [B x q x r] -> [B x p x r]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);
// x [n x in] * W [in x out] + b [out]
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Max-subtracted; outputs along `axis` are positive and sum to one.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

// Cross-correlation. x is [C x H x W] or [N x C x H x W]; kernels are
// [O x C x kh x kw]; bias is [O] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels,
                 const Tensor<T>& bias, Conv2dOptions options = {});

// Adaptive average pooling to a (grid_h x grid_w) output grid on the last two
// axes. Cell i covers [floor(i*H/gh), ceil((i+1)*H/gh)).
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t grid_h, std::size_t grid_w);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  static BatchNormStats create(std::size_t channels);
};

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// x is [N x C] or [N x C x ...]; statistics are per channel over every other
// axis. Training mode normalizes with batch statistics (biased variance) and
// updates the running estimates (unbiased variance); it rejects N < 2.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormStats<T>& stats,
                     BatchNormOptions options);

// out[j] = sum_{a,b} u[a] * M[a,j,b] * v[b]. u, v are [m] or [B x m].
template <typename T>
Tensor<T> bilinear_form(const Tensor<T>& u, const Tensor<T>& M, const Tensor<T>& v);

// Rows of table [V x e] for each id -> [n x e]. Rows equal to padding_id read
// as zeros and receive no gradient.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids,
                    int padding_id = -1);

// out[b] = x[b, ids[b]] for x [B x V].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const int> ids);

}  // namespace diffcap

#endif  // DIFFCAP_OPS_H_
