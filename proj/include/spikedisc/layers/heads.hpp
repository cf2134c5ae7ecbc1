#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "spikedisc/layers/layers.hpp"
#include "spikedisc/neurons/lif.hpp"

namespace spikedisc {

// Temporal average of per-timestep features, then cosine logits: both the
// averaged embedding (per row) and each class weight column are L2-normalized
// before the product, so logits lie in [-1, 1]. A zero averaged embedding is
// an error, not an epsilon-fix.
inline Tensor l2_head_forward(const std::vector<Tensor>& z_steps, const Tensor& w, Tape* tape = nullptr) {
  if (z_steps.empty()) throw ContractError("l2 head needs at least one timestep of features");
  Tensor z_av = ops::mean_list(z_steps, tape);
  if (z_av.ndim() != 2 || w.ndim() != 2 || z_av.dim(1) != w.dim(0))
    throw DimensionError("l2 head: features " + shape_str(z_av.shape()) + " vs weights " + shape_str(w.shape()));
  Tensor z_hat = ops::l2_normalize_rows(z_av, tape);
  Tensor w_hat = ops::l2_normalize_cols(w, tape);
  return ops::matmul(z_hat, w_hat, tape);
}

// Drives an output LIF layer with the constant current scale*logit for T
// steps and returns per-class spike counts, each in [0, T].
struct HeadSpikeConfig {
  double scale = 0.0;  // 0 selects lif.v_th
  LIFConfig lif;
};

inline Tensor head_to_spikes(const Tensor& logits, int T, const HeadSpikeConfig& cfg, Tape* tape = nullptr,
                             bool relaxed = false) {
  if (T <= 0) throw ContractError("head_to_spikes needs T >= 1, got " + std::to_string(T));
  double scale = cfg.scale > 0.0 ? cfg.scale : cfg.lif.v_th;
  Tensor current = ops::scale(logits, scale, tape);
  LIFState st;
  Tensor counts;
  for (int t = 0; t < T; ++t) {
    auto r = lif_step(st, current, cfg.lif, tape, relaxed);
    st = r.state;
    counts = counts.defined() ? ops::add(counts, r.spikes, tape) : r.spikes;
  }
  return counts;
}

// Classification head: consumes the per-timestep trunk features and produces
// logits [B x C].
class Head {
 public:
  virtual ~Head() = default;
  virtual Tensor logits(const std::vector<Tensor>& z_steps, StepContext& ctx) = 0;
  virtual void init_params(std::mt19937_64&) {}
  virtual void collect_params(NamedTensors&, const std::string&) {}
  virtual std::string describe() const = 0;
  virtual std::string kind() const = 0;
  // Effective per-class weight matrix [d x C] as used for the logit product
  // (normalized for the cosine head), for analysis probes.
  virtual Tensor effective_weights() const = 0;
  virtual bool has_bias() const { return false; }
  virtual Tensor bias() const { return Tensor(); }
};

class L2NormHead : public Head {
 public:
  L2NormHead(int dim, int classes) : dim_(dim), classes_(classes), w_(Shape{dim, classes}) {}

  Tensor logits(const std::vector<Tensor>& z_steps, StepContext& ctx) override {
    return l2_head_forward(z_steps, w_, ctx.tape);
  }

  void init_params(std::mt19937_64& rng) override { init::kaiming_normal(w_, dim_, rng); }
  void collect_params(NamedTensors& out, const std::string& prefix) override { out.emplace_back(prefix + "w", w_); }

  std::string describe() const override {
    return "head l2norm " + std::to_string(dim_) + " -> " + std::to_string(classes_);
  }
  std::string kind() const override { return "l2norm"; }

  Tensor effective_weights() const override { return ops::l2_normalize_cols(w_); }

  Tensor& weight() { return w_; }

 private:
  int dim_, classes_;
  Tensor w_;
};

// Plain affine head on the averaged features; the reference point the cosine
// head is compared against.
class VanillaHead : public Head {
 public:
  VanillaHead(int dim, int classes)
      : dim_(dim), classes_(classes), w_(Shape{dim, classes}), b_(Tensor::zeros({classes})) {}

  Tensor logits(const std::vector<Tensor>& z_steps, StepContext& ctx) override {
    if (z_steps.empty()) throw ContractError("head needs at least one timestep of features");
    Tensor z_av = ops::mean_list(z_steps, ctx.tape);
    return ops::add_rowvec(ops::matmul(z_av, w_, ctx.tape), b_, ctx.tape);
  }

  void init_params(std::mt19937_64& rng) override { init::kaiming_normal(w_, dim_, rng); }
  void collect_params(NamedTensors& out, const std::string& prefix) override {
    out.emplace_back(prefix + "w", w_);
    out.emplace_back(prefix + "b", b_);
  }

  std::string describe() const override {
    return "head vanilla " + std::to_string(dim_) + " -> " + std::to_string(classes_);
  }
  std::string kind() const override { return "vanilla"; }

  Tensor effective_weights() const override { return w_; }
  bool has_bias() const override { return true; }
  Tensor bias() const override { return b_; }

 private:
  int dim_, classes_;
  Tensor w_, b_;
};

}  // namespace spikedisc
