#pragma once

// Central-difference gradient oracle. The builder is re-invoked for every
// probe and must therefore be a pure function of the current tensor values;
// the tape pointer is null during probing so no graph is recorded.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spikedisc/core/tensor.hpp"

namespace testsupport {

using spikedisc::Tape;
using spikedisc::Tensor;

// Worst relative error between tape gradients and central differences, over
// every element of every input. Relative to max(|fd|, |analytic|, floor), so
// near-zero gradients degrade to an absolute comparison against floor.
inline double gradcheck(const std::function<Tensor(Tape*)>& build, std::vector<Tensor> inputs, double delta = 1e-5,
                        double floor = 1e-6) {
  for (auto& t : inputs) t.set_requires_grad(true);
  Tape tape;
  Tensor loss = build(&tape);
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.numel(), 0.0);
  }

  double worst = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      double keep = t.data()[i];
      t.data()[i] = keep + delta;
      double up = build(nullptr).item();
      t.data()[i] = keep - delta;
      double dn = build(nullptr).item();
      t.data()[i] = keep;
      double fd = (up - dn) / (2.0 * delta);
      double an = analytic[ti][i];
      double scale = std::max({std::fabs(fd), std::fabs(an), floor});
      worst = std::max(worst, std::fabs(fd - an) / scale);
    }
  }
  return worst;
}

// Deterministic fill helpers for test fixtures.
inline Tensor random_tensor(spikedisc::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(rng);
  return t;
}

}  // namespace testsupport
