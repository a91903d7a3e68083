#ifndef DIFFCAP_TESTS_GRADCHECK_H_
#define DIFFCAP_TESTS_GRADCHECK_H_

// Central finite-difference oracle for the autodiff engine. Test-only; it
// never calls backward() itself except to collect the analytic side.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "diffcap/nn.h"
#include "diffcap/ops.h"
#include "diffcap/tensor.h"

namespace diffcap::testing {

using TensorD = Tensor<double>;

inline TensorD random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0,
                             double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return TensorD::from(std::move(shape), std::move(v), requires_grad);
}

// Random values bounded away from zero (for relu/max kinks).
inline TensorD random_off_zero(std::mt19937_64& rng, Shape shape, double margin = 0.05) {
  TensorD t = random_tensor(rng, std::move(shape));
  for (double& x : t.data()) {
    if (std::abs(x) < margin) x = x < 0 ? x - margin : x + margin;
  }
  return t;
}

// Reduces an arbitrary output to a scalar with fixed random weights so every
// output element influences the loss.
inline TensorD probe(const TensorD& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TensorD w = random_tensor(rng, out.shape(), -1.0, 1.0, false);
  return sum(mul(out, w));
}

// Overwrites every parameter with U(-scale, scale) so zero-initialized
// branches carry gradient during checks.
inline void randomize(ParameterStore<double>& store, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (const auto& p : store.parameters()) {
    TensorD t = p.tensor;
    for (double& x : t.data()) x = dist(rng);
  }
}

inline std::vector<TensorD> parameter_tensors(const ParameterStore<double>& store) {
  std::vector<TensorD> out;
  for (const auto& p : store.parameters()) out.push_back(p.tensor);
  return out;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t checked = 0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// near-zero gradients from amplifying finite-difference noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares backward() against central differences for every element of
// every tensor in `wrt` (up to `max_per_tensor` elements, evenly strided).
inline GradCheckResult check_gradients(const std::function<TensorD()>& loss_fn,
                                       std::vector<TensorD> wrt, double step = 1e-5,
                                       std::size_t max_per_tensor = 64) {
  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  TensorD loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto values = wrt[k].data();
    const std::size_t stride = std::max<std::size_t>(1, values.size() / max_per_tensor);
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_fn().item();
      values[i] = saved - step;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * step);
      result.max_rel_error =
          std::max(result.max_rel_error, relative_error(analytic[k][i], numeric));
      result.max_abs_analytic = std::max(result.max_abs_analytic, std::abs(analytic[k][i]));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace diffcap::testing

#endif  // DIFFCAP_TESTS_GRADCHECK_H_
