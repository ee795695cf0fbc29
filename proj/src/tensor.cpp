#include "tgx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tgx {

std::size_t numel(const Shape& shape) {
  return shape[0] * shape[1] * shape[2] * shape[3];
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[' << shape[0] << ", " << shape[1] << ", " << shape[2] << ", " << shape[3] << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data.assign(tgx::numel(shape), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> data, bool requires_grad) {
  if (data.size() != tgx::numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const Node& node = checked();
  const Shape& s = node.shape;
  if (n >= s[0] || c >= s[1] || h >= s[2] || w >= s[3]) {
    throw std::out_of_range("tensor index out of range for shape " + to_string(s));
  }
  return node.data[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename T>
T Tensor<T>::item() const {
  const Node& node = checked();
  if (node.data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(node.shape));
  }
  return node.data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), checked().data, false);
}

template <typename T>
Tape<T>& Tape<T>::current() {
  thread_local Tape<T> tape;
  return tape;
}

template <typename T>
void Tape<T>::record(std::string_view op, std::vector<NodePtr> inputs, NodePtr output,
                     BackwardFn fn) {
  if (consumed_) {
    throw AutodiffError("tape already consumed by backward(); reset it before recording");
  }
  entries_.push_back(Entry{std::string(op), std::move(inputs), std::move(output), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw AutodiffError("backward() called twice without resetting the tape");
  if (loss.numel() != 1) {
    throw AutodiffError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw AutodiffError("loss is detached from the tape (no input requires grad)");
  }
  if (entries_.empty()) throw AutodiffError("backward() on an empty tape");

  const auto& root = loss.node();
  auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                         [&](const Entry& e) { return e.output == root; });
  if (it == entries_.rend()) {
    throw AutodiffError("loss was not produced by an operation on this tape");
  }
  root->grad_buffer()[0] += T(1);
  consumed_ = true;
  for (; it != entries_.rend(); ++it) {
    // Nodes never reached from the loss carry no gradient and are skipped.
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
}

template <typename T>
void Tape<T>::reset() {
  entries_.clear();
  consumed_ = false;
}

template <typename T>
Tensor<T> make_result(std::string_view op, const Shape& shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs,
                      typename Tape<T>::BackwardFn backward) {
  for (const T v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in forward output");
    }
  }
  Tensor<T> out = Tensor<T>::from(shape, std::move(data));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;

  out.set_requires_grad(true);
  std::vector<typename Tensor<T>::NodePtr> nodes;
  nodes.reserve(inputs.size());
  for (const auto& in : inputs) nodes.push_back(in.node());
  Tape<T>::current().record(op, std::move(nodes), out.node(), std::move(backward));
  return out;
}

template <typename T>
void accumulate_grad(const Tensor<T>& t, std::span<const T> values) {
  if (!t.requires_grad()) return;
  auto& g = t.node()->grad_buffer();
  if (g.size() != values.size()) throw AutodiffError("gradient size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> make_result(std::string_view, const Shape&, std::vector<float>,
                                   const std::vector<Tensor<float>>&, Tape<float>::BackwardFn);
template Tensor<double> make_result(std::string_view, const Shape&, std::vector<double>,
                                    const std::vector<Tensor<double>>&, Tape<double>::BackwardFn);
template void accumulate_grad(const Tensor<float>&, std::span<const float>);
template void accumulate_grad(const Tensor<double>&, std::span<const double>);

}  // namespace tgx
