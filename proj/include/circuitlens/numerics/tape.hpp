#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "circuitlens/numerics/tensor.hpp"

namespace circuitlens::numerics {

/// Receives the gradient of the node's output and accumulates into the
/// gradient buffers of its inputs. `input_grads[i]` is empty when input i is
/// not on the tape.
using BackwardFn =
    std::function<void(std::span<const float> grad_out, std::span<const std::span<float>> input_grads)>;

/// Ordered record of primitive operations. Nodes are appended as operations
/// run, so parents always precede children; backward walks the record once in
/// reverse. A Tape must outlive every tensor recorded on it. Tapes are not
/// shared across threads; independent tapes may run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf.
  Tensor variable(const Tensor& value);

  /// Populates gradients of every node reachable from `scalar`. Gradients
  /// accumulate across calls until zero_grad().
  void backward(const Tensor& scalar);

  /// Gradient of `t` from the last backward(s); nullopt when `t` received no
  /// gradient (unreached, or not on this tape).
  std::optional<Tensor> grad(const Tensor& t) const;

  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(std::size_t node) const { return nodes_.at(node).op; }
  const std::vector<std::size_t>& parents(std::size_t node) const { return nodes_.at(node).parents; }

  /// Used by primitives: appends a node for `value` computed from `inputs`.
  /// Inputs that are not on a tape are treated as constants. Throws when an
  /// input belongs to a different tape.
  Tensor record(std::string op, Tensor value, std::span<const Tensor> inputs, BackwardFn fn);

  /// Number of nodes visited by the most recent backward().
  std::size_t last_visit_count() const noexcept { return last_visits_; }

 private:
  struct Node {
    std::string op;
    std::size_t numel = 0;
    std::vector<std::size_t> parents;
    // Position of each input in the op's argument list; parents[i] is the
    // node of argument slots[i].
    std::vector<std::size_t> slots;
    std::size_t arity = 0;
    BackwardFn fn;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<float>> grads_;
  std::size_t last_visits_ = 0;
};

/// Returns a tensor recorded on the tape of any input that requires grad, or
/// `value` unchanged when no input does. Central dispatch for primitives.
Tensor finish_op(std::string op, Tensor value, std::span<const Tensor> inputs, BackwardFn fn);

}  // namespace circuitlens::numerics
