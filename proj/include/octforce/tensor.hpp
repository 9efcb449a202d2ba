#pragma once

// Dense f64 tensors with a reverse-mode gradient tape.
//
// A Tensor is a cheap handle to a shared Node. Ops in ops.hpp create result
// nodes that keep their parents alive and carry a closure which, given the
// node's own gradient, accumulates into the parents' gradients.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "octforce/error.hpp"

namespace octforce::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
inline thread_local std::size_t backward_records = 0;
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled; }

/// Number of backward records created on this thread so far.
inline std::size_t backward_records_created() { return detail::backward_records; }

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->data.assign(nn::numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    require(values.size() == nn::numel(shape), ErrorKind::Shape,
            "tensor data length " + std::to_string(values.size()) + " does not match shape " +
                shape_string(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  /// Builds an op result. A backward record is attached only when grad mode is
  /// on and at least one input requires grad.
  static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                            std::function<void(Node&)> backward) {
    Tensor out(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (!needs) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& t : inputs) out.node_->parents.push_back(t.node_);
    out.node_->backward = std::move(backward);
    ++detail::backward_records;
    return out;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_backward_record() const { return static_cast<bool>(node_->backward); }

  double item() const {
    require(numel() == 1, ErrorKind::Contract, "item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
  /// intermediate gradients are recomputed each call.
  void backward() const {
    require(numel() == 1, ErrorKind::Contract,
            "backward() requires a scalar, got shape " + shape_string(shape()));
    require(node_->requires_grad, ErrorKind::Contract, "backward() on a tensor without a graph");

    std::vector<Node*> order;
    {
      std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
      std::unordered_set<Node*> seen{node_.get()};
      while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
          Node* p = n->parents[next++].get();
          if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
          order.push_back(n);
          stack.pop_back();
        }
      }
    }
    for (Node* n : order)
      if (n->backward) n->ensure_grad().assign(n->data.size(), 0.0);
    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward) (*it)->backward(**it);
  }

  Node& node() const { return *node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// A named, trainable tensor.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace octforce::nn
