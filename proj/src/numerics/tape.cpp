#include "circuitlens/numerics/tape.hpp"

#include <algorithm>

#include "circuitlens/common/error.hpp"

namespace circuitlens::numerics {

Tensor Tape::variable(const Tensor& value) {
  Tensor leaf = value.detach();
  Node node;
  node.op = "leaf";
  node.numel = leaf.numel();
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  leaf.tape_ = this;
  leaf.node_ = nodes_.size() - 1;
  return leaf;
}

Tensor Tape::record(std::string op, Tensor value, std::span<const Tensor> inputs, BackwardFn fn) {
  Node node;
  node.op = std::move(op);
  node.numel = value.numel();
  node.arity = inputs.size();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    if (inputs[i].tape() != this) {
      throw ValidationError(node.op + ": inputs belong to different tapes", {{"op", node.op}});
    }
    node.parents.push_back(inputs[i].node());
    node.slots.push_back(i);
  }
  node.fn = std::move(fn);
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  value.tape_ = this;
  value.node_ = nodes_.size() - 1;
  return value;
}

void Tape::backward(const Tensor& scalar) {
  if (scalar.rank() != 0) {
    throw ShapeError("backward: expected a 0-dimensional tensor, got shape " + shape_string(scalar.shape()),
                     {{"op", "backward"}, {"shape", scalar.shape()}});
  }
  if (scalar.tape() != this) {
    throw ValidationError("backward: tensor is not recorded on this tape", {{"op", "backward"}});
  }
  const std::size_t root = scalar.node();
  {
    auto& g = grads_[root];
    if (g.empty()) g.assign(1, 0.0f);
    g[0] += 1.0f;
  }
  last_visits_ = 0;
  // Nodes after `root` cannot feed it; walk the prefix in reverse creation
  // order, which is a reverse topological order.
  std::vector<std::span<float>> input_grads;
  for (std::size_t idx = root + 1; idx-- > 0;) {
    Node& node = nodes_[idx];
    if (grads_[idx].empty() || !node.fn) continue;
    ++last_visits_;
    input_grads.assign(node.arity, std::span<float>());
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const std::size_t parent = node.parents[p];
      auto& pg = grads_[parent];
      if (pg.empty()) pg.assign(nodes_[parent].numel, 0.0f);
      input_grads[node.slots[p]] = std::span<float>(pg);
    }
    node.fn(grads_[idx], input_grads);
  }
}

std::optional<Tensor> Tape::grad(const Tensor& t) const {
  if (t.tape() != this) return std::nullopt;
  const auto& g = grads_[t.node()];
  if (g.empty()) return std::nullopt;
  return Tensor(t.shape(), g);
}

void Tape::zero_grad() {
  for (auto& g : grads_) {
    g.clear();
  }
}

Tensor finish_op(std::string op, Tensor value, std::span<const Tensor> inputs, BackwardFn fn) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      tape = in.tape();
      break;
    }
  }
  if (!tape) return value;
  return tape->record(std::move(op), std::move(value), inputs, std::move(fn));
}

}  // namespace circuitlens::numerics
