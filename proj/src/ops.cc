#include "diffcap/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Core>

namespace diffcap {

namespace {

template <typename T>
using NodeP = std::shared_ptr<detail::Node<T>>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

std::string op_shapes(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b);
}

// Product of extents in [begin, end).
std::size_t extent_product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

void check_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(s));
  }
}

// ---------------------------------------------------------------------------
// Broadcasting

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t ea = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    std::size_t eb = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) throw ShapeError(op_shapes(op, a, b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Strides of `in` expressed in the rank of `out`; zero on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    std::size_t i = in.size() - 1 - k;
    std::size_t o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t rank = out.size();
  const std::size_t n = shape_numel(out);
  if (rank == 0) return;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t last = rank - 1;
  for (std::size_t o = 0; o < n;) {
    // innermost axis as a tight loop
    for (std::size_t j = 0; j < out[last]; ++j, ++o) {
      f(o, ia + j * sa[last], ib + j * sb[last]);
    }
    std::size_t axis = last;
    while (axis > 0) {
      --axis;
      ++idx[axis];
      ia += sa[axis];
      ib += sb[axis];
      if (idx[axis] < out[axis]) break;
      ia -= sa[axis] * out[axis];
      ib -= sb[axis] * out[axis];
      idx[axis] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const char* op, BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  std::vector<T> out(n);
  const auto& va = a.values();
  const auto& vb = b.values();
  const bool same = a.shape() == b.shape();
  auto apply = [kind](T x, T y) {
    switch (kind) {
      case BinaryKind::kAdd: return x + y;
      case BinaryKind::kSub: return x - y;
      default: return x * y;
    }
  };
  std::vector<std::size_t> sa, sb;
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(va[i], vb[i]);
  } else {
    sa = broadcast_strides(a.shape(), out_shape);
    sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      out[o] = apply(va[i], vb[j]);
    });
  }
  return detail::make_result<T>(
      op, out_shape, std::move(out), {a.node_ptr(), b.node_ptr()},
      [kind, same, sa, sb](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const auto& g = self.grad;
        T sign_b = kind == BinaryKind::kSub ? T(-1) : T(1);
        auto visit = [&](std::size_t o, std::size_t i, std::size_t j) {
          if (kind == BinaryKind::kMul) {
            if (na.requires_grad) na.grad[i] += g[o] * nb.value[j];
            if (nb.requires_grad) nb.grad[j] += g[o] * na.value[i];
          } else {
            if (na.requires_grad) na.grad[i] += g[o];
            if (nb.requires_grad) nb.grad[j] += sign_b * g[o];
          }
        };
        if (same) {
          for (std::size_t o = 0; o < g.size(); ++o) visit(o, o, o);
        } else {
          for_each_broadcast(self.shape, sa, sb, visit);
        }
      });
}

enum class UnaryKind { kRelu, kTanh, kSigmoid };

template <typename T>
Tensor<T> unary(const char* op, UnaryKind kind, const Tensor<T>& x) {
  const auto& v = x.values();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    switch (kind) {
      case UnaryKind::kRelu: out[i] = v[i] > T(0) ? v[i] : T(0); break;
      case UnaryKind::kTanh: out[i] = std::tanh(v[i]); break;
      case UnaryKind::kSigmoid: out[i] = T(1) / (T(1) + std::exp(-v[i])); break;
    }
  }
  return detail::make_result<T>(op, x.shape(), std::move(out), {x.node_ptr()},
                                [kind](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  const auto& y = self.value;
                                  const auto& g = self.grad;
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                    T d;
                                    switch (kind) {
                                      case UnaryKind::kRelu: d = y[i] > T(0) ? T(1) : T(0); break;
                                      case UnaryKind::kTanh: d = T(1) - y[i] * y[i]; break;
                                      default: d = y[i] * (T(1) - y[i]); break;
                                    }
                                    in.grad[i] += g[i] * d;
                                  }
                                });
}

// (outer, n, inner) decomposition around an axis.
struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  return {extent_product(s, 0, axis), s[axis], extent_product(s, axis + 1, s.size())};
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("add", BinaryKind::kAdd, a, b);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("sub", BinaryKind::kSub, a, b);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>("mul", BinaryKind::kMul, a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.values());
  for (T& v : out) v *= factor;
  return detail::make_result<T>("scale", x.shape(), std::move(out), {x.node_ptr()},
                                [factor](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    in.grad[i] += factor * self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>("relu", UnaryKind::kRelu, x);
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>("tanh", UnaryKind::kTanh, x);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>("sigmoid", UnaryKind::kSigmoid, x);
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.values()) total += v;
  return detail::make_result<T>("sum", {1}, {total}, {x.node_ptr()},
                                [](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (T& g : in.grad) g += self.grad[0];
                                });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis) {
  check_axis("sum", x.shape(), axis);
  const AxisSplit s = split_axis(x.shape(), axis);
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto& v = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.n; ++k) {
      const T* src = &v[(o * s.n + k) * s.inner];
      T* dst = &out[o * s.inner];
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return detail::make_result<T>("sum_axis", drop_axis(x.shape(), axis), std::move(out),
                                {x.node_ptr()}, [s](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t o = 0; o < s.outer; ++o) {
                                    for (std::size_t k = 0; k < s.n; ++k) {
                                      for (std::size_t i = 0; i < s.inner; ++i) {
                                        in.grad[(o * s.n + k) * s.inner + i] +=
                                            self.grad[o * s.inner + i];
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  check_axis("mean", x.shape(), axis);
  return scale(sum(x, axis), T(1) / static_cast<T>(x.shape()[axis]));
}

template <typename T>
Tensor<T> max_over_axis(const Tensor<T>& x, std::size_t axis) {
  check_axis("max_over_axis", x.shape(), axis);
  const AxisSplit s = split_axis(x.shape(), axis);
  std::vector<T> out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner);
  const auto& v = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = (o * s.n) * s.inner + i;
      for (std::size_t k = 1; k < s.n; ++k) {
        std::size_t idx = (o * s.n + k) * s.inner + i;
        if (v[idx] > v[best]) best = idx;
      }
      out[o * s.inner + i] = v[best];
      arg[o * s.inner + i] = best;
    }
  }
  return detail::make_result<T>("max_over_axis", drop_axis(x.shape(), axis), std::move(out),
                                {x.node_ptr()},
                                [arg = std::move(arg)](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t j = 0; j < arg.size(); ++j) {
                                    in.grad[arg[j]] += self.grad[j];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError(op_shapes("reshape", x.shape(), shape));
  }
  return detail::make_result<T>("reshape", std::move(shape), x.values(), {x.node_ptr()},
                                [](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    in.grad[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts[0].shape();
  check_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) throw ShapeError(op_shapes("concat", first, s));
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = extent_product(first, 0, axis);
  const std::size_t inner = extent_product(first, axis + 1, first.size());
  const std::size_t out_chunk = out_shape[axis] * inner;
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::vector<NodeP<T>> inputs;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.shape()[axis] * inner;
    const auto& v = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(&v[o * chunk], chunk, &out[o * out_chunk + offset]);
    }
    offsets.push_back(offset);
    inputs.push_back(p.node_ptr());
    offset += chunk;
  }
  return detail::make_result<T>(
      "concat", out_shape, std::move(out), std::move(inputs),
      [outer, out_chunk, offsets](detail::Node<T>& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
          auto& in = *self.inputs[k];
          if (!in.requires_grad) continue;
          const std::size_t chunk = in.value.size() / outer;
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < chunk; ++i) {
              in.grad[o * chunk + i] += self.grad[o * out_chunk + offsets[k] + i];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis("slice", x.shape(), axis);
  if (length == 0 || start + length > x.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of bounds for axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<T> out(s.outer * length * s.inner);
  const auto& v = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(&v[(o * s.n + start) * s.inner], length * s.inner, &out[o * length * s.inner]);
  }
  return detail::make_result<T>("slice", out_shape, std::move(out), {x.node_ptr()},
                                [s, start, length](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  const std::size_t chunk = length * s.inner;
                                  for (std::size_t o = 0; o < s.outer; ++o) {
                                    for (std::size_t i = 0; i < chunk; ++i) {
                                      in.grad[(o * s.n + start) * s.inner + i] +=
                                          self.grad[o * chunk + i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack: no operands");
  std::vector<Tensor<T>> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) throw ShapeError(op_shapes("stack", parts[0].shape(), p.shape()));
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, 0);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(s));
  const std::size_t p = s[s.size() - 2], q = s[s.size() - 1];
  const std::size_t batch = x.numel() / (p * q);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  std::vector<T> out(x.numel());
  const auto& v = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < q; ++j) out[b * p * q + j * p + i] = v[b * p * q + i * q + j];
    }
  }
  return detail::make_result<T>("transpose", out_shape, std::move(out), {x.node_ptr()},
                                [batch, p, q](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t b = 0; b < batch; ++b) {
                                    for (std::size_t i = 0; i < p; ++i) {
                                      for (std::size_t j = 0; j < q; ++j) {
                                        in.grad[b * p * q + i * q + j] +=
                                            self.grad[b * p * q + j * p + i];
                                      }
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError(op_shapes("matmul", a.shape(), b.shape()));
  }
  const std::size_t p = a.shape()[0], q = a.shape()[1], r = b.shape()[1];
  std::vector<T> out(p * r);
  MapMat<T>(out.data(), p, r).noalias() =
      CMapMat<T>(a.values().data(), p, q) * CMapMat<T>(b.values().data(), q, r);
  return detail::make_result<T>(
      "matmul", {p, r}, std::move(out), {a.node_ptr(), b.node_ptr()},
      [p, q, r](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        CMapMat<T> g(self.grad.data(), p, r);
        if (na.requires_grad) {
          MapMat<T>(na.grad.data(), p, q).noalias() +=
              g * CMapMat<T>(nb.value.data(), q, r).transpose();
        }
        if (nb.requires_grad) {
          MapMat<T>(nb.grad.data(), q, r).noalias() +=
              CMapMat<T>(na.value.data(), p, q).transpose() * g;
        }
      });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] ||
      a.shape()[2] != b.shape()[1]) {
    throw ShapeError(op_shapes("bmm", a.shape(), b.shape()));
  }
  const std::size_t batch = a.shape()[0], p = a.shape()[1], q = a.shape()[2], r = b.shape()[2];
  std::vector<T> out(batch * p * r);
  for (std::size_t i = 0; i < batch; ++i) {
    MapMat<T>(out.data() + i * p * r, p, r).noalias() =
        CMapMat<T>(a.values().data() + i * p * q, p, q) *
        CMapMat<T>(b.values().data() + i * q * r, q, r);
  }
  return detail::make_result<T>(
      "bmm", {batch, p, r}, std::move(out), {a.node_ptr(), b.node_ptr()},
      [batch, p, q, r](detail::Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        for (std::size_t i = 0; i < batch; ++i) {
          CMapMat<T> g(self.grad.data() + i * p * r, p, r);
          if (na.requires_grad) {
            MapMat<T>(na.grad.data() + i * p * q, p, q).noalias() +=
                g * CMapMat<T>(nb.value.data() + i * q * r, q, r).transpose();
          }
          if (nb.requires_grad) {
            MapMat<T>(nb.grad.data() + i * q * r, q, r).noalias() +=
                CMapMat<T>(na.value.data() + i * p * q, p, q).transpose() * g;
          }
        }
      });
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.shape()[1] != weight.shape()[0]) {
    throw ShapeError(op_shapes("affine", x.shape(), weight.shape()));
  }
  const std::size_t n = x.shape()[0], in = x.shape()[1], out_dim = weight.shape()[1];
  if (bias.rank() != 1 || bias.shape()[0] != out_dim) {
    throw ShapeError(op_shapes("affine bias", weight.shape(), bias.shape()));
  }
  std::vector<T> out(n * out_dim);
  MapMat<T> o(out.data(), n, out_dim);
  o.noalias() = CMapMat<T>(x.values().data(), n, in) * CMapMat<T>(weight.values().data(), in, out_dim);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.values().data(), out_dim);
  o.rowwise() += bv;
  return detail::make_result<T>(
      "affine", {n, out_dim}, std::move(out), {x.node_ptr(), weight.node_ptr(), bias.node_ptr()},
      [n, in, out_dim](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        auto& nb = *self.inputs[2];
        CMapMat<T> g(self.grad.data(), n, out_dim);
        if (nx.requires_grad) {
          MapMat<T>(nx.grad.data(), n, in).noalias() +=
              g * CMapMat<T>(nw.value.data(), in, out_dim).transpose();
        }
        if (nw.requires_grad) {
          MapMat<T>(nw.grad.data(), in, out_dim).noalias() +=
              CMapMat<T>(nx.value.data(), n, in).transpose() * g;
        }
        if (nb.requires_grad) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(nb.grad.data(), out_dim) +=
              g.colwise().sum();
        }
      });
}

// ---------------------------------------------------------------------------
// Softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  check_axis("softmax", x.shape(), axis);
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto& v = x.values();
  std::vector<T> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      T mx = v[base];
      for (std::size_t k = 1; k < s.n; ++k) mx = std::max(mx, v[base + k * s.inner]);
      T total = T(0);
      for (std::size_t k = 0; k < s.n; ++k) {
        T e = std::exp(v[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= total;
    }
  }
  return detail::make_result<T>("softmax", x.shape(), std::move(out), {x.node_ptr()},
                                [s](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  const auto& y = self.value;
                                  const auto& g = self.grad;
                                  for (std::size_t o = 0; o < s.outer; ++o) {
                                    for (std::size_t i = 0; i < s.inner; ++i) {
                                      const std::size_t base = o * s.n * s.inner + i;
                                      T dot = T(0);
                                      for (std::size_t k = 0; k < s.n; ++k) {
                                        dot += g[base + k * s.inner] * y[base + k * s.inner];
                                      }
                                      for (std::size_t k = 0; k < s.n; ++k) {
                                        const std::size_t idx = base + k * s.inner;
                                        in.grad[idx] += y[idx] * (g[idx] - dot);
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  check_axis("log_softmax", x.shape(), axis);
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto& v = x.values();
  std::vector<T> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      T mx = v[base];
      for (std::size_t k = 1; k < s.n; ++k) mx = std::max(mx, v[base + k * s.inner]);
      T total = T(0);
      for (std::size_t k = 0; k < s.n; ++k) total += std::exp(v[base + k * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] = v[base + k * s.inner] - lse;
    }
  }
  return detail::make_result<T>("log_softmax", x.shape(), std::move(out), {x.node_ptr()},
                                [s](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  const auto& y = self.value;
                                  const auto& g = self.grad;
                                  for (std::size_t o = 0; o < s.outer; ++o) {
                                    for (std::size_t i = 0; i < s.inner; ++i) {
                                      const std::size_t base = o * s.n * s.inner + i;
                                      T total = T(0);
                                      for (std::size_t k = 0; k < s.n; ++k) total += g[base + k * s.inner];
                                      for (std::size_t k = 0; k < s.n; ++k) {
                                        const std::size_t idx = base + k * s.inner;
                                        in.grad[idx] += g[idx] - std::exp(y[idx]) * total;
                                      }
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Convolution and pooling

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t o, kh, kw;
  std::size_t stride, ph, pw;
  std::size_t ho, wo;
  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return ho * wo; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((ch * g.kh + i) * g.kw + j) * g.col_cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.ph);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pw);
            const bool inside = y >= 0 && y < static_cast<long>(g.h) && xx >= 0 &&
                                xx < static_cast<long>(g.w);
            row[oy * g.wo + ox] = inside ? x[(ch * g.h + y) * g.w + xx] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* dx) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((ch * g.kh + i) * g.kw + j) * g.col_cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.ph);
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pw);
            if (xx < 0 || xx >= static_cast<long>(g.w)) continue;
            dx[(ch * g.h + y) * g.w + xx] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.ph == 0 && g.pw == 0;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                 Conv2dOptions options) {
  const Shape& xs = x.shape();
  const Shape& ks = kernels.shape();
  const bool batched = xs.size() == 4;
  if ((xs.size() != 3 && xs.size() != 4) || ks.size() != 4 ||
      xs[xs.size() - 3] != ks[1] || options.stride == 0) {
    throw ShapeError(op_shapes("conv2d", xs, ks));
  }
  ConvGeometry g{};
  g.n = batched ? xs[0] : 1;
  g.c = xs[xs.size() - 3];
  g.h = xs[xs.size() - 2];
  g.w = xs[xs.size() - 1];
  g.o = ks[0];
  g.kh = ks[2];
  g.kw = ks[3];
  g.stride = options.stride;
  g.ph = options.pad_h;
  g.pw = options.pad_w;
  if (g.kh > g.h + 2 * g.ph || g.kw > g.w + 2 * g.pw) {
    throw ShapeError("conv2d: kernel " + shape_str(ks) + " larger than padded input " + shape_str(xs));
  }
  g.ho = (g.h + 2 * g.ph - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pw - g.kw) / g.stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.shape()[0] != g.o)) {
    throw ShapeError(op_shapes("conv2d bias", ks, bias.shape()));
  }

  const std::size_t in_size = g.c * g.h * g.w;
  const std::size_t out_size = g.o * g.ho * g.wo;
  std::vector<T> out(g.n * out_size);
  std::vector<T> col(is_pointwise(g) ? 0 : g.col_rows() * g.col_cols());
  CMapMat<T> wmat(kernels.values().data(), g.o, g.col_rows());
  for (std::size_t s = 0; s < g.n; ++s) {
    const T* xs_ptr = x.values().data() + s * in_size;
    const T* col_ptr = xs_ptr;
    if (!is_pointwise(g)) {
      im2col(g, xs_ptr, col.data());
      col_ptr = col.data();
    }
    MapMat<T> o(out.data() + s * out_size, g.o, g.col_cols());
    o.noalias() = wmat * CMapMat<T>(col_ptr, g.col_rows(), g.col_cols());
    if (has_bias) {
      for (std::size_t k = 0; k < g.o; ++k) o.row(k).array() += bias.values()[k];
    }
  }
  Shape out_shape = batched ? Shape{g.n, g.o, g.ho, g.wo} : Shape{g.o, g.ho, g.wo};
  std::vector<NodeP<T>> inputs{x.node_ptr(), kernels.node_ptr()};
  if (has_bias) inputs.push_back(bias.node_ptr());
  return detail::make_result<T>(
      "conv2d", out_shape, std::move(out), std::move(inputs),
      [g, in_size, out_size](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nk = *self.inputs[1];
        detail::Node<T>* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        const bool pointwise = is_pointwise(g);
        std::vector<T> col(pointwise ? 0 : g.col_rows() * g.col_cols());
        std::vector<T> dcol(pointwise ? 0 : g.col_rows() * g.col_cols());
        CMapMat<T> wmat(nk.value.data(), g.o, g.col_rows());
        for (std::size_t s = 0; s < g.n; ++s) {
          CMapMat<T> gout(self.grad.data() + s * out_size, g.o, g.col_cols());
          if (nk.requires_grad) {
            const T* col_ptr = nx.value.data() + s * in_size;
            if (!pointwise) {
              im2col(g, col_ptr, col.data());
              col_ptr = col.data();
            }
            MapMat<T>(nk.grad.data(), g.o, g.col_rows()).noalias() +=
                gout * CMapMat<T>(col_ptr, g.col_rows(), g.col_cols()).transpose();
          }
          if (nx.requires_grad) {
            if (pointwise) {
              MapMat<T>(nx.grad.data() + s * in_size, g.col_rows(), g.col_cols()).noalias() +=
                  wmat.transpose() * gout;
            } else {
              MapMat<T>(dcol.data(), g.col_rows(), g.col_cols()).noalias() = wmat.transpose() * gout;
              col2im_add(g, dcol.data(), nx.grad.data() + s * in_size);
            }
          }
          if (nb && nb->requires_grad) {
            for (std::size_t k = 0; k < g.o; ++k) nb->grad[k] += gout.row(k).sum();
          }
        }
      });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t grid_h, std::size_t grid_w) {
  const Shape& s = x.shape();
  if (s.size() < 3) throw ShapeError("avg_pool2d needs rank >= 3, got " + shape_str(s));
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (grid_h == 0 || grid_w == 0 || grid_h > h || grid_w > w) {
    throw ShapeError("avg_pool2d: invalid grid (" + std::to_string(grid_h) + ", " +
                     std::to_string(grid_w) + ") for input " + shape_str(s));
  }
  const std::size_t planes = x.numel() / (h * w);
  auto bounds = [](std::size_t i, std::size_t in, std::size_t out) {
    return std::pair<std::size_t, std::size_t>{(i * in) / out, ((i + 1) * in + out - 1) / out};
  };
  Shape out_shape = s;
  out_shape[s.size() - 2] = grid_h;
  out_shape[s.size() - 1] = grid_w;
  std::vector<T> out(planes * grid_h * grid_w);
  const auto& v = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t gy = 0; gy < grid_h; ++gy) {
      auto [y0, y1] = bounds(gy, h, grid_h);
      for (std::size_t gx = 0; gx < grid_w; ++gx) {
        auto [x0, x1] = bounds(gx, w, grid_w);
        T total = T(0);
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t xx = x0; xx < x1; ++xx) total += v[(p * h + y) * w + xx];
        }
        out[(p * grid_h + gy) * grid_w + gx] = total / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return detail::make_result<T>(
      "avg_pool2d", out_shape, std::move(out), {x.node_ptr()},
      [planes, h, w, grid_h, grid_w, bounds](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t gy = 0; gy < grid_h; ++gy) {
            auto [y0, y1] = bounds(gy, h, grid_h);
            for (std::size_t gx = 0; gx < grid_w; ++gx) {
              auto [x0, x1] = bounds(gx, w, grid_w);
              const T share = self.grad[(p * grid_h + gy) * grid_w + gx] /
                              static_cast<T>((y1 - y0) * (x1 - x0));
              for (std::size_t y = y0; y < y1; ++y) {
                for (std::size_t xx = x0; xx < x1; ++xx) in.grad[(p * h + y) * w + xx] += share;
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
BatchNormStats<T> BatchNormStats<T>::create(std::size_t channels) {
  return {Tensor<T>::zeros({channels}), Tensor<T>::full({channels}, T(1))};
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, BatchNormOptions options) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("batch_norm needs rank >= 2, got " + shape_str(s));
  const std::size_t n = s[0], c = s[1];
  const std::size_t spatial = extent_product(s, 2, s.size());
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &stats.running_mean, &stats.running_var}) {
    if (p->rank() != 1 || p->shape()[0] != c) {
      throw ShapeError(op_shapes("batch_norm parameters", s, p->shape()));
    }
  }
  if (options.training && n < 2) {
    throw std::invalid_argument("batch_norm: training mode needs a batch of at least 2, got " +
                                std::to_string(n));
  }
  const std::size_t count = n * spatial;
  const auto& v = x.values();
  std::vector<T> mean_c(c, T(0)), inv_std(c);
  if (options.training) {
    std::vector<T> var_c(c, T(0));
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = &v[(b * c + ch) * spatial];
        for (std::size_t i = 0; i < spatial; ++i) mean_c[ch] += p[i];
      }
    }
    for (T& m : mean_c) m /= static_cast<T>(count);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = &v[(b * c + ch) * spatial];
        for (std::size_t i = 0; i < spatial; ++i) {
          const T d = p[i] - mean_c[ch];
          var_c[ch] += d * d;
        }
      }
    }
    auto rm = stats.running_mean.data();
    auto rv = stats.running_var.data();
    const T mom = static_cast<T>(options.momentum);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T biased = var_c[ch] / static_cast<T>(count);
      const T unbiased = var_c[ch] / static_cast<T>(count - 1);
      inv_std[ch] = T(1) / std::sqrt(biased + static_cast<T>(options.epsilon));
      rm[ch] = (T(1) - mom) * rm[ch] + mom * mean_c[ch];
      rv[ch] = (T(1) - mom) * rv[ch] + mom * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean_c[ch] = stats.running_mean.values()[ch];
      inv_std[ch] = T(1) / std::sqrt(stats.running_var.values()[ch] + static_cast<T>(options.epsilon));
    }
  }
  std::vector<T> xhat(v.size()), out(v.size());
  const auto& gm = gamma.values();
  const auto& bt = beta.values();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        xhat[base + i] = (v[base + i] - mean_c[ch]) * inv_std[ch];
        out[base + i] = gm[ch] * xhat[base + i] + bt[ch];
      }
    }
  }
  const bool training = options.training;
  return detail::make_result<T>(
      "batch_norm", s, std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [n, c, spatial, count, training, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nbeta = *self.inputs[2];
        const auto& g = self.grad;
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_g = T(0), sum_gx = T(0);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * xhat[base + i];
            }
          }
          if (ng.requires_grad) ng.grad[ch] += sum_gx;
          if (nbeta.requires_grad) nbeta.grad[ch] += sum_g;
          if (!nx.requires_grad) continue;
          const T gm = ng.value[ch];
          const T m = static_cast<T>(count);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              if (training) {
                nx.grad[base + i] += gm * inv_std[ch] / m *
                                     (m * g[base + i] - sum_g - xhat[base + i] * sum_gx);
              } else {
                nx.grad[base + i] += gm * inv_std[ch] * g[base + i];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Bilinear form, embedding, gather

template <typename T>
Tensor<T> bilinear_form(const Tensor<T>& u, const Tensor<T>& M, const Tensor<T>& v) {
  if (u.shape() != v.shape() || u.rank() < 1 || u.rank() > 2 || M.rank() != 3) {
    throw ShapeError(op_shapes("bilinear_form", u.shape(), v.shape()));
  }
  const std::size_t m = u.shape().back();
  const std::size_t batch = u.rank() == 2 ? u.shape()[0] : 1;
  if (M.shape() != Shape{m, m, m}) throw ShapeError(op_shapes("bilinear_form", u.shape(), M.shape()));
  std::vector<T> out(batch * m, T(0));
  const auto& uv = u.values();
  const auto& vv = v.values();
  const auto& mv = M.values();
  // out[b, j] = sum_a u[b,a] * (M[a, j, :] . v[b, :])
  for (std::size_t b = 0; b < batch; ++b) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> vb(vv.data() + b * m, m);
    for (std::size_t a = 0; a < m; ++a) {
      const T ua = uv[b * m + a];
      if (ua == T(0)) continue;
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(out.data() + b * m, m).noalias() +=
          ua * (CMapMat<T>(mv.data() + a * m * m, m, m) * vb);
    }
  }
  return detail::make_result<T>(
      "bilinear_form", u.shape(), std::move(out), {u.node_ptr(), M.node_ptr(), v.node_ptr()},
      [batch, m](detail::Node<T>& self) {
        auto& nu = *self.inputs[0];
        auto& nm = *self.inputs[1];
        auto& nv = *self.inputs[2];
        using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
        for (std::size_t b = 0; b < batch; ++b) {
          Eigen::Map<const Vec> g(self.grad.data() + b * m, m);
          Eigen::Map<const Vec> ub(nu.value.data() + b * m, m);
          Eigen::Map<const Vec> vb(nv.value.data() + b * m, m);
          for (std::size_t a = 0; a < m; ++a) {
            CMapMat<T> slab(nm.value.data() + a * m * m, m, m);  // [j x c]
            if (nu.requires_grad) nu.grad[b * m + a] += g.dot(slab * vb);
            if (nv.requires_grad) {
              Eigen::Map<Vec>(nv.grad.data() + b * m, m).noalias() +=
                  ub[a] * (slab.transpose() * g);
            }
            if (nm.requires_grad) {
              MapMat<T>(nm.grad.data() + a * m * m, m, m).noalias() +=
                  ub[a] * (g * vb.transpose());
            }
          }
        }
      });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids, int padding_id) {
  if (table.rank() != 2) throw ShapeError("embedding table must be rank 2, got " + shape_str(table.shape()));
  if (ids.empty()) throw std::invalid_argument("embedding: empty id list");
  const std::size_t vocab = table.shape()[0], e = table.shape()[1];
  std::vector<int> id_copy(ids.begin(), ids.end());
  std::vector<T> out(ids.size() * e, T(0));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) +
                              " out of range for table of " + std::to_string(vocab) + " rows");
    }
    if (ids[i] == padding_id) continue;
    std::copy_n(&table.values()[ids[i] * e], e, &out[i * e]);
  }
  return detail::make_result<T>("embedding", {ids.size(), e}, std::move(out), {table.node_ptr()},
                                [id_copy = std::move(id_copy), e, padding_id](detail::Node<T>& self) {
                                  auto& nt = *self.inputs[0];
                                  for (std::size_t i = 0; i < id_copy.size(); ++i) {
                                    if (id_copy[i] == padding_id) continue;
                                    for (std::size_t k = 0; k < e; ++k) {
                                      nt.grad[id_copy[i] * e + k] += self.grad[i * e + k];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const int> ids) {
  if (x.rank() != 2 || x.shape()[0] != ids.size()) {
    throw ShapeError("gather_rows: " + std::to_string(ids.size()) + " ids for input " +
                     shape_str(x.shape()));
  }
  const std::size_t cols = x.shape()[1];
  std::vector<int> id_copy(ids.begin(), ids.end());
  std::vector<T> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= cols) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    }
    out[i] = x.values()[i * cols + ids[i]];
  }
  return detail::make_result<T>("gather_rows", {ids.size()}, std::move(out), {x.node_ptr()},
                                [id_copy = std::move(id_copy), cols](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < id_copy.size(); ++i) {
                                    in.grad[i * cols + id_copy[i]] += self.grad[i];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Explicit instantiation

#define DIFFCAP_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> tanh(const Tensor<T>&);                                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                \
  template Tensor<T> sum(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> max_over_axis(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                    \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);        \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);                                  \
  template Tensor<T> transpose(const Tensor<T>&);                                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                \
  template Tensor<T> log_softmax(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                            Conv2dOptions);                                                 \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t, std::size_t);                \
  template struct BatchNormStats<T>;                                                        \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                BatchNormStats<T>&, BatchNormOptions);                      \
  template Tensor<T> bilinear_form(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const int>, int);                \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const int>);

DIFFCAP_INSTANTIATE_OPS(float)
DIFFCAP_INSTANTIATE_OPS(double)

#undef DIFFCAP_INSTANTIATE_OPS

}  // namespace diffcap
