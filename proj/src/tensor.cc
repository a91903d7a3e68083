#include "diffcap/tensor.h"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace diffcap {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

template <typename T>
detail::Node<T>& Tensor<T>::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values,
                          bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const Shape& s = node().shape;
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  }
  return node().value[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  node().requires_grad = flag;
  if (!flag) node().grad.clear();
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  node().ensure_grad();
  return node().grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  node().ensure_grad();
  return node().grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node().shape, node().value, false);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward() on a loss that does not require grad");
  }
  using NodeT = detail::Node<T>;
  // Iterative post-order DFS; `order` ends up topologically sorted with
  // inputs before the records that consume them.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  NodeT* root = loss.node_ptr().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->backward) continue;
    node->ensure_grad();
    for (auto& in : node->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    node->backward(*node);
  }
}

namespace detail {

template <typename T>
void check_finite(const char* op, std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  check_finite<T>(op, values);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool track = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) track = track || in->requires_grad;
  }
  if (track) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(const char*, Shape, std::vector<float>,
                                   std::vector<std::shared_ptr<Node<float>>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(const char*, Shape, std::vector<double>,
                                    std::vector<std::shared_ptr<Node<double>>>,
                                    std::function<void(Node<double>&)>);
template void check_finite(const char*, std::span<const float>);
template void check_finite(const char*, std::span<const double>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace diffcap
