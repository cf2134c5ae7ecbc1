#pragma once

#include <string>
#include <vector>

#include "spikedisc/core/ops.hpp"
#include "spikedisc/neurons/surrogate.hpp"

namespace spikedisc {

enum class ResetMode { subtract, zero, none };

inline std::string reset_mode_name(ResetMode r) {
  switch (r) {
    case ResetMode::subtract: return "subtract";
    case ResetMode::zero: return "zero";
    default: return "none";
  }
}

struct LIFConfig {
  double beta = 0.9;  // leak factor, in [0, 1]
  double v_th = 1.0;  // firing threshold, > 0
  ResetMode reset = ResetMode::subtract;
  SurrogateSpec surrogate;

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("lif beta must lie in [0,1], got " + std::to_string(beta));
    if (!(v_th > 0.0)) throw ContractError("lif threshold must be > 0, got " + std::to_string(v_th));
  }
};

// Membrane potential carried between timesteps. Undefined until the first
// step, which initializes it to zeros of the input shape.
struct LIFState {
  Tensor v;
};

struct LifStepResult {
  Tensor spikes;
  LIFState state;
  Tensor v_pre;  // membrane after integration, before reset (what thresholding saw)
};

// One update of v' = beta*v + i; spike where v' >= v_th; then reset.
inline LifStepResult lif_step(const LIFState& state, const Tensor& input, const LIFConfig& cfg, Tape* tape = nullptr,
                              bool relaxed = false) {
  cfg.validate();
  Tensor v = state.v;
  if (!v.defined()) v = Tensor::zeros(input.shape());
  if (v.shape() != input.shape())
    throw DimensionError("lif state " + shape_str(v.shape()) + " does not match input " + shape_str(input.shape()));

  Tensor v_pre = ops::add(ops::scale(v, cfg.beta, tape), input, tape);
  Tensor u = ops::add_scalar(v_pre, -cfg.v_th, tape);
  Tensor s = spike(u, cfg.surrogate, relaxed, tape);

  Tensor v_next;
  switch (cfg.reset) {
    case ResetMode::subtract:
      v_next = ops::sub(v_pre, ops::scale(s, cfg.v_th, tape), tape);
      break;
    case ResetMode::zero: {
      Tensor keep = ops::add_scalar(ops::scale(s, -1.0, tape), 1.0, tape);
      v_next = ops::mul(v_pre, keep, tape);
      break;
    }
    case ResetMode::none:
      v_next = v_pre;
      break;
  }
  return {s, LIFState{v_next}, v_pre};
}

// Unrolls lif_step over the leading time axis of inputs [T, ...]; returns the
// spike trains [T, ...]. With potentials_out set, also returns the pre-reset
// membrane trace. State starts at zero.
inline Tensor lif_sequence(const Tensor& inputs, const LIFConfig& cfg, Tape* tape = nullptr, bool relaxed = false,
                           Tensor* potentials_out = nullptr) {
  if (inputs.ndim() < 2) throw DimensionError("lif_sequence needs a [T, ...] tensor, got " + shape_str(inputs.shape()));
  int T = inputs.dim(0);
  if (T == 0) throw ContractError("lif_sequence needs at least one timestep");
  LIFState st;
  std::vector<Tensor> spikes, pots;
  spikes.reserve(T);
  for (int t = 0; t < T; ++t) {
    auto r = lif_step(st, ops::slice_axis0(inputs, t, tape), cfg, tape, relaxed);
    st = r.state;
    spikes.push_back(r.spikes);
    if (potentials_out) pots.push_back(r.v_pre);
  }
  if (potentials_out) *potentials_out = ops::stack_axis0(pots, tape);
  return ops::stack_axis0(spikes, tape);
}

}  // namespace spikedisc
