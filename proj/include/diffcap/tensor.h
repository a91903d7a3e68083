#ifndef DIFFCAP_TENSOR_H_
#define DIFFCAP_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcap {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Raised when an operation produces NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised on operand shape mismatches; messages name the offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

// One recorded operation of the forward pass. Leaves (parameters, inputs)
// have no inputs and no backward function.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

// Gradient recording is on by default; NoGradGuard disables it for the
// current thread (inference, beam search, evaluation).
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major tensor with optional reverse-mode gradient tracking.
// Copies share storage (handle semantics); use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node().value.size(); }

  std::span<T> data() { return node().value; }
  std::span<const T> data() const { return node().value; }
  const std::vector<T>& values() const { return node().value; }
  T at(std::size_t flat_index) const { return node().value.at(flat_index); }
  T item() const;

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return node().grad.size() == node().value.size(); }
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();

  // Deep copy of the values as a new untracked leaf.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const NodePtr& node_ptr() const { return node_; }
  const char* op_name() const { return node().op; }

 private:
  detail::Node<T>& node() const;
  NodePtr node_;
};

// Populates grad for every tracked ancestor of `loss`; accumulates.
template <typename T>
void backward(const Tensor<T>& loss);

namespace detail {

// Builds the result node for an op. Tracks gradients iff grad mode is on and
// any input is tracked; checks the forward values are finite.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward_fn);

template <typename T>
void check_finite(const char* op, std::span<const T> values);

}  // namespace detail

}  // namespace diffcap

#endif  // DIFFCAP_TENSOR_H_
