// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "stylestream/rng.hpp"

namespace stylestream {

// Dense tensor with reverse-mode autodiff, templated on float width.
// Two widths are used in practice: float for training/inference, double for
// gradient-check tests. The width is fixed at creation (it is the type).
//
// Values are written once at creation; op outputs are never mutated, so
// tensors are safe to share read-only across threads. The recorded graph
// (input edges + backward closures) is confined to the thread that built it.
// The one sanctioned mutation is set_value() on a leaf between graphs, used
// by the optimizer that owns the parameter.

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<T>> value;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  // Graph edges. Present only on op outputs until backward() clears them.
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(const std::vector<T>&)> backward_fn;

  void accumulate(const std::vector<T>& g) {
    if (grad.empty()) grad.assign(value->size(), T(0));
    for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
};

namespace detail {
inline thread_local int no_grad_depth = 0;
}

// RAII guard disabling graph recording (inference / finite-difference evals).
struct NoGradGuard {
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                  " does not match data length " +
                                  std::to_string(data.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::make_shared<std::vector<T>>(std::move(data));
    n->requires_grad = requires_grad && grad_enabled();
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> d(shape_numel(shape), T(0));
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    std::vector<T> d(shape_numel(shape), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(T v) { return from_data({1}, {v}); }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1),
                      bool requires_grad = false) {
    std::vector<T> d(shape_numel(shape));
    for (auto& x : d) x = static_cast<T>(rng.normal()) * stddev;
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  int64_t rank() const { return static_cast<int64_t>(n_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(n_->value->size()); }
  int64_t rows() const { return n_->shape[0]; }
  int64_t cols() const { return n_->shape.size() > 1 ? n_->shape[1] : 1; }

  const std::vector<T>& value() const { return *n_->value; }
  T item() const {
    if (numel() != 1)
      throw std::invalid_argument("item(): tensor is not scalar, shape " +
                                  shape_str(shape()));
    return (*n_->value)[0];
  }
  T at(int64_t r, int64_t c) const { return (*n_->value)[r * cols() + c]; }

  bool requires_grad() const { return n_->requires_grad; }
  bool is_leaf() const { return !n_->backward_fn; }
  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (n_->grad.empty())
      throw std::runtime_error("grad(): no gradient accumulated");
    return n_->grad;
  }
  void zero_grad() { n_->grad.clear(); }

  // In-place value update on a leaf between graphs (optimizer step).
  void set_value(const std::vector<T>& v) {
    if (!is_leaf())
      throw std::invalid_argument("set_value: only leaves may be updated");
    if (v.size() != n_->value->size())
      throw std::invalid_argument("set_value: size mismatch");
    *n_->value = v;
  }

  std::shared_ptr<Node> node() const { return n_; }

  // Builds an op output node. Inputs/backward are recorded only when grad
  // mode is on and some input requires grad.
  static Tensor make_op(Shape shape, std::vector<T> data,
                        std::vector<Tensor> inputs,
                        std::function<void(const std::vector<T>&)> backward) {
    return make_op(std::move(shape),
                   std::make_shared<std::vector<T>>(std::move(data)),
                   std::move(inputs), std::move(backward));
  }

  // Variant taking the value buffer as shared_ptr so backward closures can
  // capture the op's own output without a node reference cycle.
  static Tensor make_op(Shape shape, std::shared_ptr<std::vector<T>> data,
                        std::vector<Tensor> inputs,
                        std::function<void(const std::vector<T>&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    bool rec = false;
    if (grad_enabled()) {
      for (const auto& in : inputs) rec = rec || in.requires_grad();
    }
    if (rec) {
      n->requires_grad = true;
      n->inputs.reserve(inputs.size());
      for (auto& in : inputs) n->inputs.push_back(in.n_);
      n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
  }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  std::shared_ptr<Node> n_;
};

// Topologically ordered op records of the graph reaching `root`.
// Order is post-order (inputs before outputs); acyclic by construction
// since every op's inputs predate it.
template <typename T>
struct ComputeGraph {
  std::vector<std::shared_ptr<TensorNode<T>>> order;
};

template <typename T>
ComputeGraph<T> trace_graph(const Tensor<T>& root) {
  ComputeGraph<T> g;
  std::unordered_set<const TensorNode<T>*> seen;
  // Iterative post-order DFS; graphs can be thousands of nodes deep.
  struct Frame {
    std::shared_ptr<TensorNode<T>> node;
    size_t next_input = 0;
  };
  std::vector<Frame> stack;
  if (root.node()->requires_grad) stack.push_back({root.node()});
  if (!stack.empty()) seen.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_input < f.node->inputs.size()) {
      auto child = f.node->inputs[f.next_input++];
      if (child->requires_grad && !seen.count(child.get())) {
        seen.insert(child.get());
        stack.push_back({child});
      }
    } else {
      g.order.push_back(f.node);
      stack.pop_back();
    }
  }
  return g;
}

// Reverse-mode sweep from a scalar loss. Populates .grad on every
// requires_grad leaf reachable from `loss`, then clears the recorded graph
// (edges and closures); leaf gradients accumulate across calls until
// zero_grad.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  ComputeGraph<T> g = trace_graph(loss);
  loss.node()->accumulate({T(1)});
  for (auto it = g.order.rbegin(); it != g.order.rend(); ++it) {
    auto& n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(n->grad);
  }
  for (auto& n : g.order) {
    if (n->backward_fn) {
      // Intermediate grads are scratch; drop them with the graph.
      n->grad.clear();
      n->inputs.clear();
      n->backward_fn = nullptr;
    }
  }
}

}  // namespace stylestream
