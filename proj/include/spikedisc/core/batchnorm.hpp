#pragma once

#include <cmath>
#include <memory>

#include "spikedisc/core/ops.hpp"

namespace spikedisc::ops {

// Per-channel batch normalization over [B,C,H,W] (channel axis 1) or [B,D]
// (channel = feature column). Training normalizes with biased batch variance
// and folds unbiased variance into the running buffers with
// running = (1-momentum)*running + momentum*batch; eval uses the buffers.
// A constant channel normalizes to 0 through the eps guard.
inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                        Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5,
                        Tape* tape = nullptr) {
  if (x.ndim() != 2 && x.ndim() != 4)
    throw DimensionError("batchnorm needs 2-D or 4-D input, got " + shape_str(x.shape()));
  int B = x.dim(0);
  int C = x.dim(1);
  long HW = 1;
  if (x.ndim() == 4) HW = static_cast<long>(x.dim(2)) * x.dim(3);
  if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C)
    throw DimensionError("batchnorm parameter shape mismatch for " + std::to_string(C) + " channels");
  if (running_mean.dim(0) != C || running_var.dim(0) != C)
    throw DimensionError("batchnorm running buffer shape mismatch for " + std::to_string(C) + " channels");

  long m = static_cast<long>(B) * HW;
  if (m < 1) throw ContractError("batchnorm needs at least one element per channel");

  auto mean = std::make_shared<std::vector<double>>(C, 0.0);
  auto invstd = std::make_shared<std::vector<double>>(C, 0.0);
  const double* px = x.data();

  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* p = px + (static_cast<long>(b) * C + c) * HW;
        for (long i = 0; i < HW; ++i) s += p[i];
      }
      double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (int b = 0; b < B; ++b) {
        const double* p = px + (static_cast<long>(b) * C + c) * HW;
        for (long i = 0; i < HW; ++i) {
          double d = p[i] - mu;
          v += d * d;
        }
      }
      double var_biased = v / static_cast<double>(m);
      (*mean)[c] = mu;
      (*invstd)[c] = 1.0 / std::sqrt(var_biased + eps);
      double var_running = (m > 1) ? v / static_cast<double>(m - 1) : var_biased;
      running_mean.data()[c] = (1.0 - momentum) * running_mean.data()[c] + momentum * mu;
      running_var.data()[c] = (1.0 - momentum) * running_var.data()[c] + momentum * var_running;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[c] = running_mean.data()[c];
      (*invstd)[c] = 1.0 / std::sqrt(running_var.data()[c] + eps);
    }
  }

  Tensor out(x.shape());
  double* po = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* p = px + (static_cast<long>(b) * C + c) * HW;
      double* q = po + (static_cast<long>(b) * C + c) * HW;
      double mu = (*mean)[c], inv = (*invstd)[c], g = gamma.data()[c], be = beta.data()[c];
      for (long i = 0; i < HW; ++i) q[i] = (p[i] - mu) * inv * g + be;
    }

  if (detail::track(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record({x.id(), gamma.id(), beta.id()}, out.id(), [=]() mutable {
      const auto& gout = out.grad();
      Tensor xt = x, gm = gamma, bt = beta;
      const double* pxv = xt.data();
      for (int c = 0; c < C; ++c) {
        double mu = (*mean)[c], inv = (*invstd)[c], gv = gm.data()[c];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < B; ++b) {
          const double* gp = gout.data() + (static_cast<long>(b) * C + c) * HW;
          const double* xp = pxv + (static_cast<long>(b) * C + c) * HW;
          for (long i = 0; i < HW; ++i) {
            sum_dy += gp[i];
            sum_dy_xhat += gp[i] * (xp[i] - mu) * inv;
          }
        }
        if (gm.requires_grad()) gm.grad_data()[c] += sum_dy_xhat;
        if (bt.requires_grad()) bt.grad_data()[c] += sum_dy;
        if (xt.requires_grad()) {
          double* gx = xt.grad_data();
          if (training) {
            double minv = 1.0 / static_cast<double>(m);
            for (int b = 0; b < B; ++b) {
              const double* gp = gout.data() + (static_cast<long>(b) * C + c) * HW;
              const double* xp = pxv + (static_cast<long>(b) * C + c) * HW;
              double* gq = gx + (static_cast<long>(b) * C + c) * HW;
              for (long i = 0; i < HW; ++i) {
                double xhat = (xp[i] - mu) * inv;
                gq[i] += gv * inv * (gp[i] - minv * sum_dy - xhat * minv * sum_dy_xhat);
              }
            }
          } else {
            for (int b = 0; b < B; ++b) {
              const double* gp = gout.data() + (static_cast<long>(b) * C + c) * HW;
              double* gq = gx + (static_cast<long>(b) * C + c) * HW;
              for (long i = 0; i < HW; ++i) gq[i] += gp[i] * gv * inv;
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace spikedisc::ops
