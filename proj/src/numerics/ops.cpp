#include "circuitlens/numerics/ops.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "circuitlens/common/error.hpp"
#include "kernels.hpp"

namespace circuitlens::numerics {
namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b),
                   {{"op", op}, {"lhs", a}, {"rhs", b}});
}

[[noreturn]] void bad_shape(const char* op, const std::string& why, const Shape& s) {
  throw ShapeError(std::string(op) + ": " + why + " (shape " + shape_string(s) + ")", {{"op", op}, {"shape", s}});
}

enum class Broadcast { same, lhs_scalar, rhs_scalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (a.rank() == 0) return Broadcast::lhs_scalar;
  if (b.rank() == 0) return Broadcast::rhs_scalar;
  shape_mismatch(op, a.shape(), b.shape());
}

// Gradient of a broadcast operand: elementwise for full tensors, summed (in
// double, left to right) for a 0-d operand.
void accumulate(std::span<float> dst, std::span<const float> src, bool reduce_to_scalar) {
  if (dst.empty()) return;
  if (reduce_to_scalar) {
    double s = 0.0;
    for (float v : src) s += v;
    dst[0] += static_cast<float>(s);
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }
}

template <typename F>
Tensor binary_map(const Tensor& a, const Tensor& b, Broadcast kind, F f) {
  const Shape& out_shape = kind == Broadcast::lhs_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  std::vector<float> out(n);
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const float x = kind == Broadcast::lhs_scalar ? da[0] : da[i];
    const float y = kind == Broadcast::rhs_scalar ? db[0] : db[i];
    out[i] = f(x, y);
  }
  return Tensor(out_shape, std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind("add", a, b);
  Tensor value = binary_map(a, b, kind, [](float x, float y) { return x + y; });
  std::array<Tensor, 2> inputs{a, b};
  return finish_op("add", std::move(value), inputs,
                   [kind](std::span<const float> g, std::span<const std::span<float>> grads) {
                     accumulate(grads[0], g, kind == Broadcast::lhs_scalar);
                     accumulate(grads[1], g, kind == Broadcast::rhs_scalar);
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind("sub", a, b);
  Tensor value = binary_map(a, b, kind, [](float x, float y) { return x - y; });
  std::array<Tensor, 2> inputs{a, b};
  return finish_op("sub", std::move(value), inputs,
                   [kind](std::span<const float> g, std::span<const std::span<float>> grads) {
                     accumulate(grads[0], g, kind == Broadcast::lhs_scalar);
                     if (!grads[1].empty()) {
                       std::vector<float> neg(g.begin(), g.end());
                       for (float& v : neg) v = -v;
                       accumulate(grads[1], neg, kind == Broadcast::rhs_scalar);
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind("mul", a, b);
  Tensor value = binary_map(a, b, kind, [](float x, float y) { return x * y; });
  std::array<Tensor, 2> inputs{a, b};
  Tensor sa = a.detach(), sb = b.detach();
  return finish_op("mul", std::move(value), inputs,
                   [kind, sa, sb](std::span<const float> g, std::span<const std::span<float>> grads) {
                     auto da = sa.data();
                     auto db = sb.data();
                     const std::size_t n = g.size();
                     if (!grads[0].empty()) {
                       std::vector<float> t(n);
                       for (std::size_t i = 0; i < n; ++i)
                         t[i] = g[i] * (kind == Broadcast::rhs_scalar ? db[0] : db[i]);
                       accumulate(grads[0], t, kind == Broadcast::lhs_scalar);
                     }
                     if (!grads[1].empty()) {
                       std::vector<float> t(n);
                       for (std::size_t i = 0; i < n; ++i)
                         t[i] = g[i] * (kind == Broadcast::lhs_scalar ? da[0] : da[i]);
                       accumulate(grads[1], t, kind == Broadcast::rhs_scalar);
                     }
                   });
}

Tensor scale(const Tensor& a, float factor) { return mul(a, Tensor::scalar(factor)); }

Tensor relu(const Tensor& x) {
  auto d = x.data();
  std::vector<float> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] > 0.0f ? d[i] : 0.0f;
  Tensor sx = x.detach();
  std::array<Tensor, 1> inputs{x};
  return finish_op("relu", Tensor(x.shape(), std::move(out)), inputs,
                   [sx](std::span<const float> g, std::span<const std::span<float>> grads) {
                     auto d = sx.data();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (d[i] > 0.0f) grads[0][i] += g[i];
                   });
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 3) bad_shape("max_pool2d", "expected [C, H, W]", x.shape());
  if (kernel == 0 || stride == 0) bad_shape("max_pool2d", "kernel and stride must be positive", x.shape());
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (kernel > H || kernel > W) bad_shape("max_pool2d", "kernel larger than input", x.shape());
  const std::size_t OH = (H - kernel) / stride + 1, OW = (W - kernel) / stride + 1;
  std::vector<float> out(C * OH * OW);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto d = x.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = c * H * W + oy * stride * W + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = c * H * W + (oy * stride + ky) * W + ox * stride + kx;
            if (d[idx] > d[best]) best = idx;
          }
        const std::size_t o = (c * OH + oy) * OW + ox;
        out[o] = d[best];
        (*argmax)[o] = best;
      }
  std::array<Tensor, 1> inputs{x};
  return finish_op("max_pool2d", Tensor({C, OH, OW}, std::move(out)), inputs,
                   [argmax](std::span<const float> g, std::span<const std::span<float>> grads) {
                     for (std::size_t o = 0; o < g.size(); ++o) grads[0][(*argmax)[o]] += g[o];
                   });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 3) bad_shape("global_avg_pool", "expected [C, H, W]", x.shape());
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  if (HW == 0) bad_shape("global_avg_pool", "empty spatial extent", x.shape());
  auto d = x.data();
  std::vector<float> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < HW; ++p) s += d[c * HW + p];
    out[c] = static_cast<float>(s / static_cast<double>(HW));
  }
  std::array<Tensor, 1> inputs{x};
  return finish_op("global_avg_pool", Tensor({C}, std::move(out)), inputs,
                   [HW](std::span<const float> g, std::span<const std::span<float>> grads) {
                     const float inv = static_cast<float>(1.0 / static_cast<double>(HW));
                     for (std::size_t c = 0; c < g.size(); ++c) {
                       const float v = g[c] * inv;
                       for (std::size_t p = 0; p < HW; ++p) grads[0][c * HW + p] += v;
                     }
                   });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  std::array<Tensor, 1> inputs{x};
  return finish_op("sum", Tensor::scalar(static_cast<float>(s)), inputs,
                   [](std::span<const float> g, std::span<const std::span<float>> grads) {
                     for (float& v : grads[0]) v += g[0];
                   });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) bad_shape("mean", "empty tensor", x.shape());
  double s = 0.0;
  for (float v : x.data()) s += v;
  std::array<Tensor, 1> inputs{x};
  return finish_op("mean", Tensor::scalar(static_cast<float>(s / static_cast<double>(n))), inputs,
                   [n](std::span<const float> g, std::span<const std::span<float>> grads) {
                     const float v = static_cast<float>(static_cast<double>(g[0]) / static_cast<double>(n));
                     for (float& e : grads[0]) e += v;
                   });
}

Tensor l2_norm(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += static_cast<double>(v) * v;
  const double norm = std::sqrt(s);
  Tensor sx = x.detach();
  std::array<Tensor, 1> inputs{x};
  return finish_op("l2_norm", Tensor::scalar(static_cast<float>(norm)), inputs,
                   [sx, norm](std::span<const float> g, std::span<const std::span<float>> grads) {
                     if (norm == 0.0) return;
                     auto d = sx.data();
                     const double k = static_cast<double>(g[0]) / norm;
                     for (std::size_t i = 0; i < d.size(); ++i) grads[0][i] += static_cast<float>(k * d[i]);
                   });
}

namespace {

std::vector<double> softmax_values(std::span<const float> x) {
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : x) mx = std::max(mx, v);
  std::vector<double> e(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - mx);
    s += e[i];
  }
  for (double& v : e) v /= s;
  return e;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  if (logits.numel() == 0) bad_shape("softmax", "empty tensor", logits.shape());
  auto p = softmax_values(logits.data());
  std::vector<float> out(p.begin(), p.end());
  auto saved = std::make_shared<std::vector<float>>(out);
  std::array<Tensor, 1> inputs{logits};
  return finish_op("softmax", Tensor(logits.shape(), std::move(out)), inputs,
                   [saved](std::span<const float> g, std::span<const std::span<float>> grads) {
                     const auto& y = *saved;
                     double dot = 0.0;
                     for (std::size_t i = 0; i < y.size(); ++i) dot += static_cast<double>(g[i]) * y[i];
                     for (std::size_t i = 0; i < y.size(); ++i)
                       grads[0][i] += static_cast<float>(y[i] * (static_cast<double>(g[i]) - dot));
                   });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  if (logits.numel() == 0) bad_shape("cross_entropy", "empty logits", logits.shape());
  if (target >= logits.numel()) {
    throw ShapeError("cross_entropy: target " + std::to_string(target) + " out of range for shape " +
                         shape_string(logits.shape()),
                     {{"op", "cross_entropy"}, {"shape", logits.shape()}, {"target", target}});
  }
  auto d = logits.data();
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : d) mx = std::max(mx, v);
  double s = 0.0;
  for (float v : d) s += std::exp(static_cast<double>(v) - mx);
  const double loss = std::log(s) + mx - d[target];
  Tensor sl = logits.detach();
  std::array<Tensor, 1> inputs{logits};
  return finish_op("cross_entropy", Tensor::scalar(static_cast<float>(loss)), inputs,
                   [sl, target](std::span<const float> g, std::span<const std::span<float>> grads) {
                     auto p = softmax_values(sl.data());
                     for (std::size_t i = 0; i < p.size(); ++i) {
                       const double onehot = i == target ? 1.0 : 0.0;
                       grads[0][i] += static_cast<float>(static_cast<double>(g[0]) * (p[i] - onehot));
                     }
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<float> out(M * N);
  kernels::gemm(M, N, K, a.data().data(), b.data().data(), out.data());
  Tensor sa = a.detach(), sb = b.detach();
  std::array<Tensor, 2> inputs{a, b};
  return finish_op("matmul", Tensor({M, N}, std::move(out)), inputs,
                   [sa, sb, M, K, N](std::span<const float> g, std::span<const std::span<float>> grads) {
                     if (!grads[0].empty()) {
                       // dA = g * B^T
                       std::vector<float> bt(N * K), da(M * K);
                       kernels::transpose(K, N, sb.data().data(), bt.data());
                       kernels::gemm(M, K, N, g.data(), bt.data(), da.data());
                       for (std::size_t i = 0; i < da.size(); ++i) grads[0][i] += da[i];
                     }
                     if (!grads[1].empty()) {
                       // dB = A^T * g
                       std::vector<float> at(K * M), db(K * N);
                       kernels::transpose(M, K, sa.data().data(), at.data());
                       kernels::gemm(K, N, M, at.data(), g.data(), db.data());
                       for (std::size_t i = 0; i < db.size(); ++i) grads[1][i] += db[i];
                     }
                   });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding) {
  if (input.rank() != 3) bad_shape("conv2d", "input must be [C_in, H, W]", input.shape());
  if (kernels.rank() != 4) bad_shape("conv2d", "kernels must be [C_out, C_in, kh, kw]", kernels.shape());
  if (kernels.dim(1) != input.dim(0)) shape_mismatch("conv2d", input.shape(), kernels.shape());
  if (stride == 0) bad_shape("conv2d", "stride must be positive", input.shape());
  kernels::ConvGeometry geo{input.dim(0), input.dim(1), input.dim(2), kernels.dim(2), kernels.dim(3), stride,
                            padding, 0, 0};
  if (geo.kernel_h > geo.height + 2 * padding || geo.kernel_w > geo.width + 2 * padding) {
    shape_mismatch("conv2d", input.shape(), kernels.shape());
  }
  const std::size_t C_out = kernels.dim(0);
  if (bias && (bias->rank() != 1 || bias->dim(0) != C_out)) shape_mismatch("conv2d", kernels.shape(), bias->shape());
  geo.out_h = (geo.height + 2 * padding - geo.kernel_h) / stride + 1;
  geo.out_w = (geo.width + 2 * padding - geo.kernel_w) / stride + 1;
  const std::size_t J = geo.patch(), P = geo.positions();

  auto col = std::make_shared<std::vector<float>>(J * P);
  kernels::im2col(input.data().data(), geo, col->data());
  std::vector<float> out(C_out * P);
  kernels::gemm(C_out, P, J, kernels.data().data(), col->data(), out.data(),
                bias ? bias->data().data() : nullptr);

  Tensor sk = kernels.detach();
  std::vector<Tensor> inputs{input, kernels};
  if (bias) inputs.push_back(*bias);
  return finish_op(
      "conv2d", Tensor({C_out, geo.out_h, geo.out_w}, std::move(out)), inputs,
      [geo, col, sk, C_out, J, P](std::span<const float> g, std::span<const std::span<float>> grads) {
        if (!grads[0].empty()) {
          // dcol = W^T * g, then scatter back onto the input grid.
          std::vector<float> wt(J * C_out), dcol(J * P);
          kernels::transpose(C_out, J, sk.data().data(), wt.data());
          kernels::gemm(J, P, C_out, wt.data(), g.data(), dcol.data());
          std::vector<double> dx(geo.in_channels * geo.height * geo.width, 0.0);
          kernels::col2im_acc(dcol.data(), geo, dx.data());
          for (std::size_t i = 0; i < dx.size(); ++i) grads[0][i] += static_cast<float>(dx[i]);
        }
        if (!grads[1].empty()) {
          // dW = g * col^T
          std::vector<float> col_t(P * J), dw(C_out * J);
          kernels::transpose(J, P, col->data(), col_t.data());
          kernels::gemm(C_out, J, P, g.data(), col_t.data(), dw.data());
          for (std::size_t i = 0; i < dw.size(); ++i) grads[1][i] += dw[i];
        }
        if (grads.size() > 2 && !grads[2].empty()) {
          for (std::size_t c = 0; c < C_out; ++c) {
            double s = 0.0;
            for (std::size_t p = 0; p < P; ++p) s += g[c * P + p];
            grads[2][c] += static_cast<float>(s);
          }
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  std::array<Tensor, 1> inputs{x};
  return finish_op("reshape", Tensor(std::move(shape), x.to_vector()), inputs,
                   [](std::span<const float> g, std::span<const std::span<float>> grads) {
                     for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
                   });
}

Tensor channel(const Tensor& x, std::size_t c) {
  if (x.rank() == 0) bad_shape("channel", "cannot slice a 0-dimensional tensor", x.shape());
  if (c >= x.dim(0)) {
    throw ShapeError("channel: index " + std::to_string(c) + " out of range for shape " + shape_string(x.shape()),
                     {{"op", "channel"}, {"shape", x.shape()}, {"index", c}});
  }
  Shape rest(x.shape().begin() + 1, x.shape().end());
  const std::size_t stride = shape_numel(rest);
  auto d = x.data();
  std::vector<float> out(d.begin() + static_cast<std::ptrdiff_t>(c * stride),
                         d.begin() + static_cast<std::ptrdiff_t>((c + 1) * stride));
  std::array<Tensor, 1> inputs{x};
  return finish_op("channel", Tensor(std::move(rest), std::move(out)), inputs,
                   [c, stride](std::span<const float> g, std::span<const std::span<float>> grads) {
                     for (std::size_t i = 0; i < stride; ++i) grads[0][c * stride + i] += g[i];
                   });
}

}  // namespace circuitlens::numerics
