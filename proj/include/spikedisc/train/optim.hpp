#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spikedisc/io/checkpoint.hpp"
#include "spikedisc/layers/layers.hpp"

namespace spikedisc::train {

// Piecewise-constant decay: the rate drops by a factor of gamma at each
// milestone epoch, i.e. lr(e) = base * gamma^(number of milestones <= e).
inline double milestone_lr(double base, const std::vector<int>& milestones, double gamma, int epoch) {
  int hits = 0;
  for (int m : milestones)
    if (m <= epoch) ++hits;
  return base * std::pow(gamma, hits);
}

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam over a fixed parameter list. Weight decay is folded into the gradient
// (classic L2 regularization, not the decoupled variant), and bias correction
// uses the shared step count t.
class Adam {
 public:
  Adam(NamedTensors params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& [name, p] : params_) {
      m_.emplace_back(name, Tensor::zeros(p.shape()));
      v_.emplace_back(name, Tensor::zeros(p.shape()));
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long step_count() const { return t_; }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i].second;
      if (!p.has_grad()) continue;
      double* th = p.data();
      const double* g = p.grad_data();
      double* m = m_[i].second.data();
      double* v = v_[i].second.data();
      for (std::size_t j = 0; j < p.numel(); ++j) {
        double grad = g[j] + cfg_.weight_decay * th[j];
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad * grad;
        th[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      }
    }
  }

  io::OptimState state() const {
    io::OptimState s;
    s.step = t_;
    for (const auto& [name, t] : m_) s.m.emplace_back(name, t.clone());
    for (const auto& [name, t] : v_) s.v.emplace_back(name, t.clone());
    return s;
  }

  void restore(const io::OptimState& s) {
    t_ = s.step;
    io::restore_tensors(m_, s.m, "optimizer first moment");
    io::restore_tensors(v_, s.v, "optimizer second moment");
  }

 private:
  NamedTensors params_;
  AdamConfig cfg_;
  long t_ = 0;
  NamedTensors m_;
  NamedTensors v_;
};

}  // namespace spikedisc::train
