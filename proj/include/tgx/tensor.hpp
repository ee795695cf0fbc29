#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tgx {

// Rank-4 shape [n, c, h, w]. Matrices are stored as [rows, cols, 1, 1] and
// vectors as [len, 1, 1, 1].
using Shape = std::array<std::size_t, 4>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

inline Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols, 1, 1}; }
inline Shape vector_shape(std::size_t len) { return {len, 1, 1, 1}; }
inline Shape scalar_shape() { return {1, 1, 1, 1}; }

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a forward op produces NaN/Inf or an optimizer sees a NaN gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Mode { Train, Eval };

template <typename T>
struct TensorNode {
  Shape shape{0, 0, 0, 0};
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient flows into this node
  bool requires_grad = false;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

// Value handle over a shared node. Copies alias the same storage; forward ops
// always allocate fresh outputs, so a tensor is not mutated after creation
// except by the optimizer and initializers working on leaf parameters.
template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return checked().shape; }
  std::size_t dim(std::size_t axis) const { return shape()[axis]; }
  std::size_t numel() const { return checked().data.size(); }

  std::span<const T> data() const { return checked().data; }
  // Direct access for parameter initialization and optimizer updates.
  std::span<T> mutable_data() { return checked().data; }

  bool has_grad() const { return !checked().grad.empty(); }
  std::span<const T> grad() const { return checked().grad; }
  void zero_grad() { checked().grad.clear(); }

  bool requires_grad() const { return checked().requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    checked().requires_grad = flag;
    return *this;
  }

  T at(std::size_t n, std::size_t c = 0, std::size_t h = 0, std::size_t w = 0) const;
  T item() const;

  // Copy of the values with no tape history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  Node& checked() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return *node_;
  }
  NodePtr node_;
};

// Recorded operations in execution order. The tape active for a thread is
// Tape<T>::current(); ops record onto it whenever an input requires grad and
// gradient recording is enabled.
template <typename T>
class Tape {
 public:
  using NodePtr = typename Tensor<T>::NodePtr;
  using BackwardFn = std::function<void(const std::vector<T>& grad_out)>;

  struct Entry {
    std::string op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  static Tape& current();

  void record(std::string_view op, std::vector<NodePtr> inputs, NodePtr output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. The tape must be
  // reset before another backward pass.
  void backward(const Tensor<T>& loss);

  void reset();
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>::current().backward(loss);
}

template <typename T>
void reset_tape() {
  Tape<T>::current().reset();
}

bool grad_enabled();

// Disables tape recording for the lifetime of the guard (evaluation passes,
// finite-difference probes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op output: validates finiteness, decides whether the result joins
// the tape, and registers the backward rule when it does.
template <typename T>
Tensor<T> make_result(std::string_view op, const Shape& shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs,
                      typename Tape<T>::BackwardFn backward);

// Adds `values` into the gradient buffer of `t` when it participates in autodiff.
template <typename T>
void accumulate_grad(const Tensor<T>& t, std::span<const T> values);

}  // namespace tgx
