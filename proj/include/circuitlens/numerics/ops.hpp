#pragma once

#include <cstddef>
#include <optional>

#include "circuitlens/numerics/tape.hpp"
#include "circuitlens/numerics/tensor.hpp"

namespace circuitlens::numerics {

// Differentiable primitives. Each one records a tape node when any input
// requires grad and otherwise runs as a plain function. Shape violations raise
// ShapeError naming the op and the offending shapes. Broadcasting is limited
// to a 0-dimensional operand paired with a tensor.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

/// max(x, 0); the derivative at exactly 0 is 0.
Tensor relu(const Tensor& x);

/// Max pooling over [C, H, W] without padding. Ties route the gradient to the
/// first maximal element in row-major scan order.
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

/// [C, H, W] -> [C], mean over spatial positions.
Tensor global_avg_pool(const Tensor& x);

/// Full reductions to a 0-dimensional tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Euclidean norm over all elements. Gradient at the zero vector is zero.
Tensor l2_norm(const Tensor& x);

/// Softmax over all elements (intended for 1-D logits).
Tensor softmax(const Tensor& logits);
/// -log softmax(logits)[target], computed through log-sum-exp.
Tensor cross_entropy(const Tensor& logits, std::size_t target);

/// [m, k] x [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// input [C_in, H, W], kernels [C_out, C_in, kh, kw], optional bias [C_out].
/// Output [C_out, H', W'] with H' = floor((H + 2*padding - kh) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding);

/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);

/// Slice index `c` along the leading (channel) axis: [C, ...] -> [...].
Tensor channel(const Tensor& x, std::size_t c);

}  // namespace circuitlens::numerics
