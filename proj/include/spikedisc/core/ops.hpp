#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "spikedisc/core/parallel.hpp"
#include "spikedisc/core/tensor.hpp"

// Differentiable primitives. Every op takes an optional Tape*; with a tape and
// at least one grad-tracking input it records a backward closure, otherwise it
// is a plain forward computation (identical outputs either way).
namespace spikedisc::ops {

namespace detail {

inline bool track(const Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(int m, int k, int n, const double* A, const double* B, double* C) {
  parallel_for(m, 16, [&](long i0, long i1) {
    for (long i = i0; i < i1; ++i) {
      double* c = C + i * n;
      const double* a = A + i * k;
      for (int kk = 0; kk < k; ++kk) {
        double av = a[kk];
        if (av == 0.0) continue;
        const double* b = B + static_cast<long>(kk) * n;
        for (int j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  });
}

// C[m x n] += A[m x k] * B[n x k]^T
inline void gemm_nt(int m, int k, int n, const double* A, const double* B, double* C) {
  parallel_for(m, 16, [&](long i0, long i1) {
    for (long i = i0; i < i1; ++i) {
      const double* a = A + i * k;
      double* c = C + i * n;
      for (int j = 0; j < n; ++j) {
        const double* b = B + static_cast<long>(j) * k;
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) acc += a[kk] * b[kk];
        c[j] += acc;
      }
    }
  });
}

// C[m x n] += A[k x m]^T * B[k x n]
inline void gemm_tn(int m, int k, int n, const double* A, const double* B, double* C) {
  parallel_for(m, 32, [&](long i0, long i1) {
    for (int kk = 0; kk < k; ++kk) {
      const double* arow = A + static_cast<long>(kk) * m;
      const double* b = B + static_cast<long>(kk) * n;
      for (long i = i0; i < i1; ++i) {
        double av = arow[i];
        if (av == 0.0) continue;
        double* c = C + i * n;
        for (int j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::check_same_shape(a, b, "add");
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a.id(), b.id()}, out.id(), [a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a.id(), b.id()}, out.id(), [a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a.id(), b.id()}, out.id(), [a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad_data();
        const double* pb2 = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb2[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad_data();
        const double* pa2 = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa2[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double c, Tape* tape = nullptr) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = c * pa[i];
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record({a.id()}, out.id(), [a, out, c]() mutable {
      const auto& g = out.grad();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
  }
  return out;
}

inline Tensor add_scalar(const Tensor& a, double c, Tape* tape = nullptr) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + c;
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record({a.id()}, out.id(), [a, out]() mutable {
      const auto& g = out.grad();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

inline Tensor sum_all(const Tensor& a, Tape* tape = nullptr) {
  double s = 0.0;
  const double* pa = a.data();
  for (std::size_t i = 0; i < a.numel(); ++i) s += pa[i];
  Tensor out = Tensor::scalar(s);
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record({a.id()}, out.id(), [a, out]() mutable {
      double g = out.grad()[0];
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g;
    });
  }
  return out;
}

// a [m x k] * b [k x n] -> [m x n]
inline Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul needs 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  detail::gemm_nn(m, k, n, a.data(), b.data(), out.data());
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a.id(), b.id()}, out.id(), [a, b, out, m, k, n]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) detail::gemm_nt(m, n, k, g, b.data(), a.grad_data());
      if (b.requires_grad()) detail::gemm_tn(k, m, n, a.data(), g, b.grad_data());
    });
  }
  return out;
}

// x [B x M] + row vector b [M]
inline Tensor add_rowvec(const Tensor& x, const Tensor& b, Tape* tape = nullptr) {
  if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1))
    throw DimensionError("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  int B = x.dim(0), M = x.dim(1);
  Tensor out(x.shape());
  const double* px = x.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < M; ++j) po[i * M + j] = px[i * M + j] + pb[j];
  if (detail::track(tape, {&x, &b})) {
    out.set_requires_grad(true);
    tape->record({x.id(), b.id()}, out.id(), [x, b, out, B, M]() mutable {
      const auto& g = out.grad();
      if (x.requires_grad()) {
        double* gx = x.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (b.requires_grad()) {
        double* gb = b.grad_data();
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < M; ++j) gb[j] += g[static_cast<std::size_t>(i) * M + j];
      }
    });
  }
  return out;
}

inline Tensor reshape(const Tensor& a, Shape new_shape, Tape* tape = nullptr) {
  if (shape_numel(new_shape) != a.numel())
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(new_shape) + " changes element count");
  Tensor out = Tensor::from(std::move(new_shape), a.vec());
  if (detail::track(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record({a.id()}, out.id(), [a, out]() mutable {
      const auto& g = out.grad();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

// [B, d0, d1, ...] -> [B, d0*d1*...]
inline Tensor flatten(const Tensor& a, Tape* tape = nullptr) {
  if (a.ndim() < 2) throw DimensionError("flatten needs at least 2 dims, got " + shape_str(a.shape()));
  int rest = 1;
  for (int i = 1; i < a.ndim(); ++i) rest *= a.dim(i);
  return reshape(a, {a.dim(0), rest}, tape);
}

// x [B,C,H,W] (*) w [F,C,kh,kw], cross-correlation, symmetric zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, int stride = 1, int padding = 0, Tape* tape = nullptr) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw DimensionError("conv2d needs 4-D input and weight, got " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (x.dim(1) != w.dim(1))
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (stride < 1) throw ContractError("conv2d stride must be >= 1");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int Ho = (H + 2 * padding - kh) / stride + 1;
  int Wo = (W + 2 * padding - kw) / stride + 1;
  if (H + 2 * padding < kh || W + 2 * padding < kw)
    throw DimensionError("conv2d kernel " + shape_str(w.shape()) + " larger than padded input " + shape_str(x.shape()));
  int K = C * kh * kw, P = Ho * Wo;

  auto im2col = [=](const double* xb, double* cols) {
    for (int c = 0; c < C; ++c)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          double* row = cols + (static_cast<long>(c) * kh * kw + ki * kw + kj) * P;
          for (int oy = 0; oy < Ho; ++oy) {
            int iy = oy * stride + ki - padding;
            for (int ox = 0; ox < Wo; ++ox) {
              int ix = ox * stride + kj - padding;
              row[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                      ? xb[(static_cast<long>(c) * H + iy) * W + ix]
                                      : 0.0;
            }
          }
        }
  };

  Tensor out(Shape{B, F, Ho, Wo});
  {
    std::vector<double> cols(static_cast<std::size_t>(K) * P);
    for (int b = 0; b < B; ++b) {
      im2col(x.data() + static_cast<long>(b) * C * H * W, cols.data());
      detail::gemm_nn(F, K, P, w.data(), cols.data(), out.data() + static_cast<long>(b) * F * P);
    }
  }

  if (detail::track(tape, {&x, &w})) {
    out.set_requires_grad(true);
    tape->record({x.id(), w.id()}, out.id(), [=]() mutable {
      const double* g = out.grad().data();
      std::vector<double> cols(static_cast<std::size_t>(K) * P);
      if (w.requires_grad()) {
        double* gw = w.grad_data();
        for (int b = 0; b < B; ++b) {
          im2col(x.data() + static_cast<long>(b) * C * H * W, cols.data());
          detail::gemm_nt(F, P, K, g + static_cast<long>(b) * F * P, cols.data(), gw);
        }
      }
      if (x.requires_grad()) {
        double* gx = x.grad_data();
        std::vector<double> dcols(static_cast<std::size_t>(K) * P);
        for (int b = 0; b < B; ++b) {
          std::fill(dcols.begin(), dcols.end(), 0.0);
          detail::gemm_tn(K, F, P, w.data(), g + static_cast<long>(b) * F * P, dcols.data());
          double* gxb = gx + static_cast<long>(b) * C * H * W;
          for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                const double* row = dcols.data() + (static_cast<long>(c) * kh * kw + ki * kw + kj) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                  int iy = oy * stride + ki - padding;
                  if (iy < 0 || iy >= H) continue;
                  for (int ox = 0; ox < Wo; ++ox) {
                    int ix = ox * stride + kj - padding;
                    if (ix >= 0 && ix < W) gxb[(static_cast<long>(c) * H + iy) * W + ix] += row[oy * Wo + ox];
                  }
                }
              }
        }
      }
    });
  }
  return out;
}

// Max pooling, window k x k, stride defaults to k, no padding. Ties go to the
// first element in row-major window order.
inline Tensor maxpool2d(const Tensor& x, int k, int stride = 0, Tape* tape = nullptr) {
  if (x.ndim() != 4) throw DimensionError("maxpool2d needs 4-D input, got " + shape_str(x.shape()));
  if (k < 1) throw ContractError("maxpool2d window must be >= 1");
  if (stride == 0) stride = k;
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (k > H || k > W)
    throw DimensionError("maxpool2d window " + std::to_string(k) + " larger than input " + shape_str(x.shape()));
  int Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  Tensor out(Shape{B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<long>>(out.numel());
  const double* px = x.data();
  double* po = out.data();
  long o = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* plane = px + (static_cast<long>(b) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          long best_idx = -1;
          double best = 0.0;
          for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
              long idx = static_cast<long>(oy * stride + ki) * W + ox * stride + kj;
              if (best_idx < 0 || plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          po[o] = best;
          (*argmax)[o] = (static_cast<long>(b) * C + c) * H * W + best_idx;
        }
    }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x.id()}, out.id(), [x, out, argmax]() mutable {
      const auto& g = out.grad();
      double* gx = x.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
    });
  }
  return out;
}

// Global average over the spatial dims: [B,C,H,W] -> [B,C].
inline Tensor avgpool_global(const Tensor& x, Tape* tape = nullptr) {
  if (x.ndim() != 4) throw DimensionError("avgpool_global needs 4-D input, got " + shape_str(x.shape()));
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  long hw = static_cast<long>(H) * W;
  Tensor out(Shape{B, C});
  const double* px = x.data();
  double* po = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* plane = px + (static_cast<long>(b) * C + c) * hw;
      double s = 0.0;
      for (long i = 0; i < hw; ++i) s += plane[i];
      po[b * C + c] = s / static_cast<double>(hw);
    }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x.id()}, out.id(), [x, out, B, C, hw]() mutable {
      const auto& g = out.grad();
      double* gx = x.grad_data();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          double gv = g[static_cast<std::size_t>(b) * C + c] / static_cast<double>(hw);
          double* plane = gx + (static_cast<long>(b) * C + c) * hw;
          for (long i = 0; i < hw; ++i) plane[i] += gv;
        }
    });
  }
  return out;
}

// Inverted dropout: training keeps each element with prob 1-p and scales by
// 1/(1-p) so the expectation matches the identity; eval is the identity.
inline Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng, Tape* tape = nullptr) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  double keep = 1.0 - p;
  double inv = 1.0 / keep;
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& m : *mask) m = (uni(rng) < keep) ? inv : 0.0;
  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = px[i] * (*mask)[i];
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x.id()}, out.id(), [x, out, mask]() mutable {
      const auto& g = out.grad();
      double* gx = x.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
    });
  }
  return out;
}

// Column-wise concatenation of [B x D1] and [B x D2].
inline Tensor concat_cols(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
    throw DimensionError("concat_cols: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  int B = a.dim(0), D1 = a.dim(1), D2 = b.dim(1);
  Tensor out(Shape{B, D1 + D2});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < B; ++i) {
    std::copy(pa + static_cast<long>(i) * D1, pa + static_cast<long>(i + 1) * D1, po + static_cast<long>(i) * (D1 + D2));
    std::copy(pb + static_cast<long>(i) * D2, pb + static_cast<long>(i + 1) * D2,
              po + static_cast<long>(i) * (D1 + D2) + D1);
  }
  if (detail::track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a.id(), b.id()}, out.id(), [a, b, out, B, D1, D2]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        double* ga = a.grad_data();
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < D1; ++j) ga[static_cast<long>(i) * D1 + j] += g[static_cast<long>(i) * (D1 + D2) + j];
      }
      if (b.requires_grad()) {
        double* gb = b.grad_data();
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < D2; ++j)
            gb[static_cast<long>(i) * D2 + j] += g[static_cast<long>(i) * (D1 + D2) + D1 + j];
      }
    });
  }
  return out;
}

// Slice index i along axis 0: [T, rest...] -> [rest...].
inline Tensor slice_axis0(const Tensor& x, int i, Tape* tape = nullptr) {
  if (x.ndim() < 2) throw DimensionError("slice_axis0 needs at least 2 dims, got " + shape_str(x.shape()));
  int T = x.dim(0);
  if (i < 0 || i >= T) throw DimensionError("slice_axis0 index " + std::to_string(i) + " out of range [0," + std::to_string(T) + ")");
  Shape rest(x.shape().begin() + 1, x.shape().end());
  std::size_t step = shape_numel(rest);
  Tensor out(rest);
  std::copy(x.data() + static_cast<long>(i) * step, x.data() + static_cast<long>(i + 1) * step, out.data());
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x.id()}, out.id(), [x, out, i, step]() mutable {
      const auto& g = out.grad();
      double* gx = x.grad_data() + static_cast<long>(i) * step;
      for (std::size_t j = 0; j < step; ++j) gx[j] += g[j];
    });
  }
  return out;
}

// Stack equal-shaped tensors along a new axis 0.
inline Tensor stack_axis0(const std::vector<Tensor>& xs, Tape* tape = nullptr) {
  if (xs.empty()) throw ContractError("stack_axis0 needs at least one tensor");
  for (const auto& t : xs) detail::check_same_shape(xs[0], t, "stack_axis0");
  Shape out_shape;
  out_shape.push_back(static_cast<int>(xs.size()));
  out_shape.insert(out_shape.end(), xs[0].shape().begin(), xs[0].shape().end());
  std::size_t step = xs[0].numel();
  Tensor out(out_shape);
  for (std::size_t i = 0; i < xs.size(); ++i)
    std::copy(xs[i].data(), xs[i].data() + step, out.data() + i * step);
  bool rec = tape != nullptr;
  if (rec) {
    bool any = false;
    for (const auto& t : xs) any = any || t.requires_grad();
    rec = any;
  }
  if (rec) {
    out.set_requires_grad(true);
    std::vector<const void*> ids;
    for (const auto& t : xs) ids.push_back(t.id());
    tape->record(std::move(ids), out.id(), [xs, out, step]() mutable {
      const auto& g = out.grad();
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!xs[i].requires_grad()) continue;
        double* gx = const_cast<Tensor&>(xs[i]).grad_data();
        for (std::size_t j = 0; j < step; ++j) gx[j] += g[i * step + j];
      }
    });
  }
  return out;
}

// Pairwise-tree mean of equal-shaped tensors. The tree keeps the sum exact for
// identical inputs and dyadic counts.
inline Tensor mean_list(std::vector<Tensor> xs, Tape* tape = nullptr) {
  if (xs.empty()) throw ContractError("mean_list needs at least one tensor");
  std::size_t n = xs.size();
  while (xs.size() > 1) {
    std::vector<Tensor> next;
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) next.push_back(add(xs[i], xs[i + 1], tape));
    if (xs.size() % 2) next.push_back(xs.back());
    xs = std::move(next);
  }
  return scale(xs[0], 1.0 / static_cast<double>(n), tape);
}

// Row-wise L2 normalization of [B x D]. A row with norm below the degeneracy
// threshold raises instead of being epsilon-patched.
//
// Each row is first divided by its max-magnitude entry, then by the norm of
// that canonical row. When a positive scaling c*x is exactly representable,
// x[j]/maxabs and (c*x[j])/(c*maxabs) round identically, so the output bits
// do not depend on the scale.
inline Tensor l2_normalize_rows(const Tensor& x, Tape* tape = nullptr, double degenerate_thresh = 1e-12) {
  if (x.ndim() != 2) throw DimensionError("l2_normalize_rows needs 2-D input, got " + shape_str(x.shape()));
  int B = x.dim(0), D = x.dim(1);
  Tensor out(x.shape());
  auto norms = std::make_shared<std::vector<double>>(B);
  std::vector<double> u(D);
  std::string bad;
  for (int i = 0; i < B; ++i) {
    const double* row = x.data() + static_cast<long>(i) * D;
    double m = 0.0;
    for (int j = 0; j < D; ++j) m = std::max(m, std::fabs(row[j]));
    double q = 0.0;
    if (m > 0.0) {
      double s = 0.0;
      for (int j = 0; j < D; ++j) {
        u[j] = row[j] / m;
        s += u[j] * u[j];
      }
      q = std::sqrt(s);
    }
    (*norms)[i] = m * q;
    if ((*norms)[i] < degenerate_thresh) {
      bad += (bad.empty() ? "" : ", ") + std::to_string(i);
      continue;
    }
    double* orow = out.data() + static_cast<long>(i) * D;
    for (int j = 0; j < D; ++j) orow[j] = u[j] / q;
  }
  if (!bad.empty())
    throw DegenerateEmbedding("zero-norm embedding for row(s) " + bad + "; the sample(s) produced no signal");
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x.id()}, out.id(), [x, out, norms, B, D]() mutable {
      const auto& g = out.grad();
      double* gx = x.grad_data();
      const double* y = out.data();
      for (int i = 0; i < B; ++i) {
        const double* yrow = y + static_cast<long>(i) * D;
        const double* grow = g.data() + static_cast<long>(i) * D;
        double dot = 0.0;
        for (int j = 0; j < D; ++j) dot += yrow[j] * grow[j];
        double inv = 1.0 / (*norms)[i];
        double* gxr = gx + static_cast<long>(i) * D;
        for (int j = 0; j < D; ++j) gxr[j] += (grow[j] - yrow[j] * dot) * inv;
      }
    });
  }
  return out;
}

// Column-wise L2 normalization of [D x C] (class weight columns). Same
// maxabs-canonical scheme as the row version, so scaling a column by an
// exactly representable positive factor leaves its normalized bits alone.
inline Tensor l2_normalize_cols(const Tensor& w, Tape* tape = nullptr, double degenerate_thresh = 1e-12) {
  if (w.ndim() != 2) throw DimensionError("l2_normalize_cols needs 2-D input, got " + shape_str(w.shape()));
  int D = w.dim(0), C = w.dim(1);
  Tensor out(w.shape());
  auto norms = std::make_shared<std::vector<double>>(C);
  std::vector<double> u(D);
  for (int j = 0; j < C; ++j) {
    double m = 0.0;
    for (int i = 0; i < D; ++i) m = std::max(m, std::fabs(w.data()[static_cast<long>(i) * C + j]));
    double q = 0.0;
    if (m > 0.0) {
      double s = 0.0;
      for (int i = 0; i < D; ++i) {
        u[i] = w.data()[static_cast<long>(i) * C + j] / m;
        s += u[i] * u[i];
      }
      q = std::sqrt(s);
    }
    (*norms)[j] = m * q;
    if ((*norms)[j] < degenerate_thresh) throw DegenerateEmbedding("zero-norm weight column " + std::to_string(j));
    for (int i = 0; i < D; ++i) out.data()[static_cast<long>(i) * C + j] = u[i] / q;
  }
  if (detail::track(tape, {&w})) {
    out.set_requires_grad(true);
    tape->record({w.id()}, out.id(), [w, out, norms, D, C]() mutable {
      const auto& g = out.grad();
      double* gw = w.grad_data();
      const double* y = out.data();
      for (int j = 0; j < C; ++j) {
        double dot = 0.0;
        for (int i = 0; i < D; ++i) dot += y[static_cast<long>(i) * C + j] * g[static_cast<long>(i) * C + j];
        double inv = 1.0 / (*norms)[j];
        for (int i = 0; i < D; ++i)
          gw[static_cast<long>(i) * C + j] += (g[static_cast<long>(i) * C + j] - y[static_cast<long>(i) * C + j] * dot) * inv;
      }
    });
  }
  return out;
}

inline bool has_nan(const Tensor& t) {
  const double* p = t.data();
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (std::isnan(p[i])) return true;
  return false;
}

}  // namespace spikedisc::ops
