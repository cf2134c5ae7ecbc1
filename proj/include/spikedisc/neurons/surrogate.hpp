#pragma once

#include <cmath>
#include <string>

#include "spikedisc/core/ops.hpp"
#include "spikedisc/core/tensor.hpp"

namespace spikedisc {

enum class SurrogateKind { arctan, fast_sigmoid };

// Pseudo-derivative used in place of the Heaviside derivative, evaluated at
// u = v - v_th. Default backward is the exact derivative of the smooth step
// S(u); with `literal` set it instead uses the fixed closed forms
//   arctan:       (1/pi) / (1 + (pi*u*a/2)^2)
//   fast sigmoid:     u  / (1 + k*|u|)^2
// which are NOT the derivatives of the corresponding smooth steps (the arctan
// form drops the a/2 amplitude, the fast-sigmoid form carries a stray u).
struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::arctan;
  double a = 2.0;  // arctan sharpness
  double k = 5.0;  // fast-sigmoid slope
  bool literal = false;
};

inline std::string surrogate_kind_name(SurrogateKind k) {
  return k == SurrogateKind::arctan ? "arctan" : "fast_sigmoid";
}

// Smooth step approximation S(u), centered at the threshold:
//   arctan:       (1/pi) * atan(pi*u*a/2)
//   fast sigmoid: u / (1 + k*|u|)
inline double surrogate_smooth_step(double u, const SurrogateSpec& spec) {
  if (spec.kind == SurrogateKind::arctan) return std::atan(M_PI * u * spec.a / 2.0) / M_PI;
  return u / (1.0 + spec.k * std::fabs(u));
}

// d/du of surrogate_smooth_step.
inline double surrogate_smooth_derivative(double u, const SurrogateSpec& spec) {
  if (spec.kind == SurrogateKind::arctan) {
    double t = M_PI * u * spec.a / 2.0;
    return (spec.a / 2.0) / (1.0 + t * t);
  }
  double d = 1.0 + spec.k * std::fabs(u);
  return 1.0 / (d * d);
}

inline double surrogate_pseudo_derivative(double u, const SurrogateSpec& spec) {
  if (!spec.literal) return surrogate_smooth_derivative(u, spec);
  if (spec.kind == SurrogateKind::arctan) {
    double t = M_PI * u * spec.a / 2.0;
    return (1.0 / M_PI) / (1.0 + t * t);
  }
  double d = 1.0 + spec.k * std::fabs(u);
  return u / (d * d);
}

// Elementwise pseudo-derivative of the spike nonlinearity at u = v - v_th.
inline Tensor surrogate_backward(const Tensor& v_minus_th, const SurrogateSpec& spec) {
  Tensor out(v_minus_th.shape());
  const double* p = v_minus_th.data();
  double* q = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) q[i] = surrogate_pseudo_derivative(p[i], spec);
  return out;
}

// Spike nonlinearity on u = v - v_th. Hard mode emits Heaviside(u) (1 at
// u >= 0) and backpropagates the pseudo-derivative; relaxed mode emits the
// smooth step with its exact derivative, which makes whole-network
// finite-difference checks meaningful.
inline Tensor spike(const Tensor& u, const SurrogateSpec& spec, bool relaxed = false, Tape* tape = nullptr) {
  Tensor out(u.shape());
  const double* p = u.data();
  double* q = out.data();
  if (relaxed) {
    for (std::size_t i = 0; i < out.numel(); ++i) q[i] = surrogate_smooth_step(p[i], spec);
  } else {
    for (std::size_t i = 0; i < out.numel(); ++i) q[i] = (p[i] >= 0.0) ? 1.0 : 0.0;
  }
  if (tape && u.requires_grad()) {
    out.set_requires_grad(true);
    tape->record({u.id()}, out.id(), [u, out, spec, relaxed]() mutable {
      const auto& g = out.grad();
      double* gu = u.grad_data();
      const double* pu = u.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double pd = relaxed ? surrogate_smooth_derivative(pu[i], spec) : surrogate_pseudo_derivative(pu[i], spec);
        gu[i] += g[i] * pd;
      }
    });
  }
  return out;
}

}  // namespace spikedisc
