#include "kernels.hpp"

#include <algorithm>
#include <array>
#include <vector>

namespace circuitlens::numerics::kernels {

namespace {
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 256;
}  // namespace

void gemm(std::size_t M, std::size_t N, std::size_t K, const float* __restrict A, const float* __restrict B,
          float* __restrict C, const float* row_init) {
  alignas(64) std::array<double, kRowBlock * kColBlock> acc;
  for (std::size_t m0 = 0; m0 < M; m0 += kRowBlock) {
    const std::size_t mb = std::min(kRowBlock, M - m0);
    for (std::size_t n0 = 0; n0 < N; n0 += kColBlock) {
      const std::size_t nb = std::min(kColBlock, N - n0);
      for (std::size_t r = 0; r < mb; ++r) {
        const double init = row_init ? static_cast<double>(row_init[m0 + r]) : 0.0;
        std::fill_n(acc.data() + r * kColBlock, nb, init);
      }
      if (mb == kRowBlock) {
        double* __restrict a0 = acc.data();
        double* __restrict a1 = a0 + kColBlock;
        double* __restrict a2 = a1 + kColBlock;
        double* __restrict a3 = a2 + kColBlock;
        for (std::size_t k = 0; k < K; ++k) {
          const double w0 = A[(m0 + 0) * K + k];
          const double w1 = A[(m0 + 1) * K + k];
          const double w2 = A[(m0 + 2) * K + k];
          const double w3 = A[(m0 + 3) * K + k];
          const float* __restrict b = B + k * N + n0;
          for (std::size_t j = 0; j < nb; ++j) {
            const double bj = b[j];
            a0[j] += w0 * bj;
            a1[j] += w1 * bj;
            a2[j] += w2 * bj;
            a3[j] += w3 * bj;
          }
        }
      } else {
        for (std::size_t r = 0; r < mb; ++r) {
          double* __restrict ar = acc.data() + r * kColBlock;
          for (std::size_t k = 0; k < K; ++k) {
            const double w = A[(m0 + r) * K + k];
            const float* __restrict b = B + k * N + n0;
            for (std::size_t j = 0; j < nb; ++j) ar[j] += w * static_cast<double>(b[j]);
          }
        }
      }
      for (std::size_t r = 0; r < mb; ++r) {
        float* c = C + (m0 + r) * N + n0;
        const double* ar = acc.data() + r * kColBlock;
        for (std::size_t j = 0; j < nb; ++j) c[j] = static_cast<float>(ar[j]);
      }
    }
  }
}

void transpose(std::size_t rows, std::size_t cols, const float* src, float* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

void im2col(const float* x, const ConvGeometry& g, float* col) {
  const std::size_t P = g.positions();
  std::size_t j = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const float* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++j) {
        float* row = col + j * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          float* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void im2col_t(const float* x, const ConvGeometry& g, float* col_t) {
  const std::size_t J = g.patch();
  const std::size_t P = g.positions();
  std::vector<float> col(J * P);
  im2col(x, g, col.data());
  transpose(J, P, col.data(), col_t);
}

void col2im_acc(const float* col, const ConvGeometry& g, double* x_acc) {
  const std::size_t P = g.positions();
  std::size_t j = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* plane = x_acc + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++j) {
        const float* row = col + j * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const float* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace circuitlens::numerics::kernels
