#pragma once

// Inner loops shared by the tensor primitives. Every reduction accumulates in
// double, visiting the summed index in increasing order, so results are
// bit-reproducible regardless of threading.

#include <cstddef>

namespace circuitlens::numerics::kernels {

/// C[m, n] = init[m] + sum_k A[m, k] * B[k, n]  (all row-major, dense).
/// `row_init` may be null (treated as zeros).
void gemm(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C,
          const float* row_init = nullptr);

/// Transpose of a row-major rows x cols matrix.
void transpose(std::size_t rows, std::size_t cols, const float* src, float* dst);

struct ConvGeometry {
  std::size_t in_channels, height, width;
  std::size_t kernel_h, kernel_w, stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

/// col[j, p] with j = (c, ky, kx), p = (oy, ox); padded taps are zero.
void im2col(const float* x, const ConvGeometry& g, float* col);
/// Same values laid out as colT[p, j].
void im2col_t(const float* x, const ConvGeometry& g, float* col_t);
/// Scatter-adds col[j, p] back onto the input grid, accumulating in `x_acc`.
void col2im_acc(const float* col, const ConvGeometry& g, double* x_acc);

}  // namespace circuitlens::numerics::kernels
