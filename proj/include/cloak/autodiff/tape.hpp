#pragma once

#include <deque>
#include <functional>
#include <initializer_list>

#include "cloak/core/tensor.hpp"

namespace cloak::ad {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
// reverse insertion order is a valid topological order for backward().
// A tape is single-threaded; build one per forward/backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Appends an op result. The backward closure is kept only if some input
  // requires a gradient; it must accumulate into inputs via grad().
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }

  // Gradient buffer; zero-initialized on first access.
  Tensor& grad(Var v);
  // Copy of the accumulated gradient (zeros if none reached the node).
  Tensor gradient(Var v) const;

  // Seeds d(root)/d(root) = 1 and propagates. root must hold one element.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

}  // namespace cloak::ad
