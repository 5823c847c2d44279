#pragma once

// Dense rank-2 tensors with reverse-mode automatic differentiation.
//
// Every op result keeps shared references to its operands plus a closure that
// pushes the result's gradient back into them, so the chain of results reaching
// a scalar loss forms the tape. Vectors are 1 x n (or n x 1) matrices.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "galformer/errors.hpp"

namespace galformer::nc {

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <std::floating_point T>
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << '[' << r << " x " << c << ']';
  return os.str();
}

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<T> values,
                     bool requires_grad = false) {
    if (values.size() != rows * cols) {
      throw ShapeMismatch("data length " + std::to_string(values.size()) + " vs shape " +
                          shape_str(rows, cols));
    }
    auto n = std::make_shared<Node<T>>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return from(rows, cols, std::vector<T>(rows * cols, T(0)), requires_grad);
  }
  static Tensor full(std::size_t rows, std::size_t cols, T v) {
    return from(rows, cols, std::vector<T>(rows * cols, v));
  }
  static Tensor scalar(T v) { return from(1, 1, {v}); }
  static Tensor row(std::vector<T> v) {
    const auto n = v.size();
    return from(1, n, std::move(v));
  }

  bool defined() const noexcept { return static_cast<bool>(n_); }
  // an undefined handle reads as an empty [0 x 0] tensor
  std::size_t rows() const { return n_ ? n_->rows : 0; }
  std::size_t cols() const { return n_ ? n_->cols : 0; }
  std::size_t size() const { return n_ ? n_->value.size() : 0; }
  std::array<std::size_t, 2> shape() const { return {n_->rows, n_->cols}; }

  T operator()(std::size_t r, std::size_t c) const { return n_->value[r * n_->cols + c]; }
  T item() const {
    if (size() != 1) throw ShapeMismatch("item() on " + shape_str(rows(), cols()));
    return n_->value[0];
  }
  std::span<const T> data() const { return n_->value; }
  /// Direct write access; only meaningful for leaves (parameters, constants).
  std::span<T> mutable_data() { return n_->value; }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool v) { n_->requires_grad = v; }
  bool has_grad() const { return !n_->grad.empty(); }
  std::span<const T> grad() const { return n_->grad; }
  std::span<T> mutable_grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() { n_->grad.clear(); }

  /// Value copy detached from the tape.
  Tensor detach() const { return from(rows(), cols(), n_->value); }

  Node<T>* node() const noexcept { return n_.get(); }
  const NodePtr& node_ptr() const noexcept { return n_; }

 private:
  NodePtr n_;
};

/// Build an op result. The backward closure is recorded only when grad mode is
/// on and some operand requires a gradient.
template <std::floating_point T, class Backward>
Tensor<T> make_result(std::size_t rows, std::size_t cols, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> operands, Backward&& bw) {
  auto n = std::make_shared<Node<T>>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto* op : operands) any = any || op->requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(operands.size());
      for (const auto* op : operands) n->parents.push_back(op->node_ptr());
      n->backward_fn = std::forward<Backward>(bw);
    }
  }
  return Tensor<T>(std::move(n));
}

template <std::floating_point T, class Backward>
Tensor<T> make_result_n(std::size_t rows, std::size_t cols, std::vector<T> value,
                        std::span<const Tensor<T>> operands, Backward&& bw) {
  auto n = std::make_shared<Node<T>>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  if (grad_enabled()) {
    const bool any = std::any_of(operands.begin(), operands.end(),
                                 [](const Tensor<T>& t) { return t.requires_grad(); });
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(operands.size());
      for (const auto& op : operands) n->parents.push_back(op.node_ptr());
      n->backward_fn = std::forward<Backward>(bw);
    }
  }
  return Tensor<T>(std::move(n));
}

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls.
template <std::floating_point T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw NonScalarLoss("loss has shape " + shape_str(loss.rows(), loss.cols()));
  if (!loss.requires_grad()) return;

  // iterative post-order DFS; deep tapes would overflow a recursive walk
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn || n->grad.empty()) continue;
    for (auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    n->backward_fn(*n);
    if (!n->parents.empty()) {
      // intermediate gradient no longer needed
      std::vector<T>().swap(n->grad);
    }
  }
}

}  // namespace galformer::nc
