#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikedisc/core/batchnorm.hpp"
#include "spikedisc/core/ops.hpp"
#include "spikedisc/neurons/lif.hpp"

namespace spikedisc {

struct StepContext {
  Tape* tape = nullptr;
  bool training = false;
  bool relaxed = false;              // smooth spike mode for finite-difference checks
  std::mt19937_64* rng = nullptr;    // dropout masks
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Stateful per-timestep building block. Shapes exclude the batch axis.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, StepContext& ctx) = 0;
  virtual void reset_state() {}
  virtual void init_params(std::mt19937_64&) {}
  virtual void collect_params(NamedTensors&, const std::string&) {}
  virtual void collect_buffers(NamedTensors&, const std::string&) {}
  virtual Shape out_shape(const Shape& in) const { return in; }
  virtual std::string describe() const = 0;
};

namespace init {

// Fan-in scaled normal draw, std = sqrt(2 / fan_in).
inline void kaiming_normal(Tensor& w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  double* p = w.data();
  for (std::size_t i = 0; i < w.numel(); ++i) p[i] = dist(rng);
}

}  // namespace init

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(int in_c, int out_c, int k, int stride, int pad)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), w_(Shape{out_c, in_c, k, k}) {}

  Tensor forward(const Tensor& x, StepContext& ctx) override { return ops::conv2d(x, w_, stride_, pad_, ctx.tape); }

  void init_params(std::mt19937_64& rng) override { init::kaiming_normal(w_, in_c_ * k_ * k_, rng); }

  void collect_params(NamedTensors& out, const std::string& prefix) override { out.emplace_back(prefix + "w", w_); }

  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != in_c_)
      throw DimensionError("conv expects [" + std::to_string(in_c_) + ",H,W], got " + shape_str(in));
    int ho = (in[1] + 2 * pad_ - k_) / stride_ + 1;
    int wo = (in[2] + 2 * pad_ - k_) / stride_ + 1;
    return {out_c_, ho, wo};
  }

  std::string describe() const override {
    std::ostringstream os;
    os << "conv " << k_ << "x" << k_ << ", " << in_c_ << " -> " << out_c_ << ", stride " << stride_ << ", pad " << pad_;
    return os.str();
  }

  Tensor& weight() { return w_; }

 private:
  int in_c_, out_c_, k_, stride_, pad_;
  Tensor w_;
};

class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(int channels, double momentum = 0.1, double eps = 1e-5)
      : ch_(channels),
        momentum_(momentum),
        eps_(eps),
        gamma_(Tensor::full({channels}, 1.0)),
        beta_(Tensor::zeros({channels})),
        running_mean_(Tensor::zeros({channels})),
        running_var_(Tensor::full({channels}, 1.0)) {}

  Tensor forward(const Tensor& x, StepContext& ctx) override {
    return ops::batchnorm(x, gamma_, beta_, running_mean_, running_var_, ctx.training, momentum_, eps_, ctx.tape);
  }

  void collect_params(NamedTensors& out, const std::string& prefix) override {
    out.emplace_back(prefix + "gamma", gamma_);
    out.emplace_back(prefix + "beta", beta_);
  }
  void collect_buffers(NamedTensors& out, const std::string& prefix) override {
    out.emplace_back(prefix + "running_mean", running_mean_);
    out.emplace_back(prefix + "running_var", running_var_);
  }

  Shape out_shape(const Shape& in) const override {
    if (in.empty() || in[0] != ch_)
      throw DimensionError("bn expects channel dim " + std::to_string(ch_) + ", got " + shape_str(in));
    return in;
  }

  std::string describe() const override { return "bn " + std::to_string(ch_); }

 private:
  int ch_;
  double momentum_, eps_;
  Tensor gamma_, beta_, running_mean_, running_var_;
};

class LifLayer : public Layer {
 public:
  explicit LifLayer(LIFConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  Tensor forward(const Tensor& x, StepContext& ctx) override {
    auto r = lif_step(state_, x, cfg_, ctx.tape, ctx.relaxed);
    state_ = r.state;
    return r.spikes;
  }

  void reset_state() override { state_ = LIFState{}; }

  std::string describe() const override {
    std::ostringstream os;
    os << "lif beta=" << cfg_.beta << " vth=" << cfg_.v_th << " reset=" << reset_mode_name(cfg_.reset) << " "
       << surrogate_kind_name(cfg_.surrogate.kind);
    return os.str();
  }

  const LIFConfig& config() const { return cfg_; }

 private:
  LIFConfig cfg_;
  LIFState state_;
};

class MaxPoolLayer : public Layer {
 public:
  explicit MaxPoolLayer(int k, int stride = 0) : k_(k), stride_(stride == 0 ? k : stride) {}

  Tensor forward(const Tensor& x, StepContext& ctx) override { return ops::maxpool2d(x, k_, stride_, ctx.tape); }

  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3) throw DimensionError("maxpool expects [C,H,W], got " + shape_str(in));
    if (k_ > in[1] || k_ > in[2])
      throw DimensionError("maxpool window " + std::to_string(k_) + " larger than input " + shape_str(in));
    return {in[0], (in[1] - k_) / stride_ + 1, (in[2] - k_) / stride_ + 1};
  }

  std::string describe() const override {
    return "maxpool " + std::to_string(k_) + "x" + std::to_string(k_) + ", stride " + std::to_string(stride_);
  }

 private:
  int k_, stride_;
};

class GlobalAvgPoolLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, StepContext& ctx) override { return ops::avgpool_global(x, ctx.tape); }

  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3) throw DimensionError("avgpool expects [C,H,W], got " + shape_str(in));
    return {in[0]};
  }

  std::string describe() const override { return "avgpool global"; }
};

class FlattenLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, StepContext& ctx) override { return ops::flatten(x, ctx.tape); }

  Shape out_shape(const Shape& in) const override {
    int n = 1;
    for (int d : in) n *= d;
    return {n};
  }

  std::string describe() const override { return "flatten"; }
};

class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double p) : p_(p) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout rate must lie in [0,1), got " + std::to_string(p));
  }

  Tensor forward(const Tensor& x, StepContext& ctx) override {
    if (ctx.training && !ctx.rng) throw ContractError("dropout in training mode needs an rng");
    static std::mt19937_64 unused_rng;  // eval path never draws
    return ops::dropout(x, p_, ctx.training, ctx.rng ? *ctx.rng : unused_rng, ctx.tape);
  }

  std::string describe() const override {
    std::ostringstream os;
    os << "dropout p=" << p_;
    return os.str();
  }

 private:
  double p_;
};

class LinearLayer : public Layer {
 public:
  LinearLayer(int in, int out, bool bias = true) : in_(in), out_(out), bias_(bias), w_(Shape{in, out}) {
    if (bias) b_ = Tensor::zeros({out});
  }

  Tensor forward(const Tensor& x, StepContext& ctx) override {
    Tensor y = ops::matmul(x, w_, ctx.tape);
    if (bias_) y = ops::add_rowvec(y, b_, ctx.tape);
    return y;
  }

  void init_params(std::mt19937_64& rng) override { init::kaiming_normal(w_, in_, rng); }

  void collect_params(NamedTensors& out, const std::string& prefix) override {
    out.emplace_back(prefix + "w", w_);
    if (bias_) out.emplace_back(prefix + "b", b_);
  }

  Shape out_shape(const Shape& in) const override {
    if (in.size() != 1 || in[0] != in_)
      throw DimensionError("linear expects [" + std::to_string(in_) + "], got " + shape_str(in));
    return {out_};
  }

  std::string describe() const override {
    return "linear " + std::to_string(in_) + " -> " + std::to_string(out_) + (bias_ ? "" : ", no bias");
  }

 private:
  int in_, out_;
  bool bias_;
  Tensor w_, b_;
};

}  // namespace spikedisc
