#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "blendnet/errors.hpp"
#include "blendnet/matrix.hpp"

namespace blendnet {

template <typename T>
class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const { return tape->value(id); }
  const Matrix<T>& grad() const { return tape->grad(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Reverse-mode computation record. Nodes are appended in evaluation order, so
// every node's inputs precede it and a single reverse sweep suffices.
template <typename T>
class Tape {
 public:
  // Called during the reverse sweep with the tape and the node's own id. The
  // callback reads grad(self) and accumulates into grad_slot(input).
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), {}, nullptr, false); }
  Var<T> variable(Matrix<T> value) { return push(std::move(value), {}, nullptr, true); }

  Var<T> record(Matrix<T> value, std::vector<std::size_t> inputs, Backward backward) {
    bool needs_grad = false;
    for (std::size_t in : inputs) {
      if (in >= nodes_.size()) throw UsageError("tape input refers to a later node");
      needs_grad = needs_grad || nodes_[in].requires_grad;
    }
    if (!needs_grad) backward = nullptr;
    return push(std::move(value), std::move(inputs), std::move(backward), needs_grad);
  }

  const Matrix<T>& value(std::size_t id) const { return nodes_.at(id).value; }

  // Gradient of the last backward() root with respect to node `id`. Nodes that
  // received no gradient report an all-zero matrix of the right shape.
  const Matrix<T>& grad(std::size_t id) const {
    const Node& node = nodes_.at(id);
    if (node.grad.empty() && !node.value.empty()) {
      node.grad = Matrix<T>(node.value.rows(), node.value.cols());
    }
    return node.grad;
  }

  Matrix<T>& grad_slot(std::size_t id) {
    Node& node = nodes_.at(id);
    if (node.grad.empty()) node.grad = Matrix<T>(node.value.rows(), node.value.cols());
    return node.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var<T> root) {
    if (root.tape != this) throw UsageError("backward root belongs to another tape");
    const Matrix<T>& v = value(root.id);
    if (v.rows() != 1 || v.cols() != 1) {
      throw UsageError("backward requires a scalar root, got shape " + v.shape_string());
    }
    for (Node& node : nodes_) node.grad = Matrix<T>();
    grad_slot(root.id)(0, 0) = T{1};
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || node.grad.empty()) continue;
      node.backward(*this, i);
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    mutable Matrix<T> grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  Var<T> push(Matrix<T> value, std::vector<std::size_t> inputs, Backward backward,
              bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Matrix<T>(), std::move(inputs),
                          std::move(backward), requires_grad});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace blendnet
