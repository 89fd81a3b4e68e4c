#include "cloak/autodiff/tape.hpp"

#include <stdexcept>

namespace cloak::ad {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var v : inputs) needs = needs || requires_grad(v);
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (Var v : inputs) needs = needs || requires_grad(v);
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.size() != n.value.size()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw std::invalid_argument("backward() needs a scalar root");
  for (auto& n : nodes_) n.grad = Tensor();
  grad(root)[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && n.grad.size() == n.value.size()) n.backward(*this, Var{i});
  }
}

}  // namespace cloak::ad
