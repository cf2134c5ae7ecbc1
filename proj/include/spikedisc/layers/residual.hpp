#pragma once

#include <memory>
#include <sstream>
#include <string>

#include "spikedisc/layers/layers.hpp"

namespace spikedisc {

// Wiring of the residual block. The baseline places the spiking activation
// after the skip addition, with each branch conv followed by LIF then BN.
//   baseline:       conv1 > lif > bn1 > conv2 > bn2 (+ skip) > lif_out
//   lif_after_bn:   conv1 > bn1 > lif > conv2 > bn2 (+ skip) > lif_out
//   lif_before_add: conv1 > lif > bn1 > conv2 > bn2 > lif (+ skip) > lif_out
enum class BlockVariant { baseline, lif_after_bn, lif_before_add };

inline std::string block_variant_name(BlockVariant v) {
  switch (v) {
    case BlockVariant::baseline: return "baseline";
    case BlockVariant::lif_after_bn: return "lif_after_bn";
    default: return "lif_before_add";
  }
}

inline BlockVariant block_variant_from_name(const std::string& s) {
  if (s == "baseline") return BlockVariant::baseline;
  if (s == "lif_after_bn") return BlockVariant::lif_after_bn;
  if (s == "lif_before_add") return BlockVariant::lif_before_add;
  throw ConfigError("unknown block variant '" + s + "'");
}

// Two-conv residual block whose output activation fires after the addition.
// A 1x1 projection with BN carries the skip when channels or stride change.
class ActAfterAdditionBlock : public Layer {
 public:
  ActAfterAdditionBlock(int in_c, int out_c, int stride, BlockVariant variant, LIFConfig lif)
      : in_c_(in_c),
        out_c_(out_c),
        stride_(stride),
        variant_(variant),
        conv1_(in_c, out_c, 3, stride, 1),
        bn1_(out_c),
        conv2_(out_c, out_c, 3, 1, 1),
        bn2_(out_c),
        lif_inner_(lif),
        lif_out_(lif),
        needs_projection_(in_c != out_c || stride != 1) {
    if (variant == BlockVariant::lif_before_add) lif_pre_add_ = std::make_unique<LifLayer>(lif);
    if (needs_projection_) {
      down_conv_ = std::make_unique<Conv2dLayer>(in_c, out_c, 1, stride, 0);
      down_bn_ = std::make_unique<BatchNormLayer>(out_c);
    }
  }

  Tensor forward(const Tensor& x, StepContext& ctx) override {
    Tensor y = conv1_.forward(x, ctx);
    if (variant_ == BlockVariant::lif_after_bn) {
      y = bn1_.forward(y, ctx);
      y = lif_inner_.forward(y, ctx);
    } else {
      y = lif_inner_.forward(y, ctx);
      y = bn1_.forward(y, ctx);
    }
    y = conv2_.forward(y, ctx);
    y = bn2_.forward(y, ctx);
    if (lif_pre_add_) y = lif_pre_add_->forward(y, ctx);
    Tensor s = x;
    if (needs_projection_) {
      s = down_conv_->forward(x, ctx);
      s = down_bn_->forward(s, ctx);
    }
    return lif_out_.forward(ops::add(y, s, ctx.tape), ctx);
  }

  void reset_state() override {
    lif_inner_.reset_state();
    lif_out_.reset_state();
    if (lif_pre_add_) lif_pre_add_->reset_state();
  }

  void init_params(std::mt19937_64& rng) override {
    conv1_.init_params(rng);
    conv2_.init_params(rng);
    if (down_conv_) down_conv_->init_params(rng);
  }

  void collect_params(NamedTensors& out, const std::string& prefix) override {
    conv1_.collect_params(out, prefix + "conv1.");
    bn1_.collect_params(out, prefix + "bn1.");
    conv2_.collect_params(out, prefix + "conv2.");
    bn2_.collect_params(out, prefix + "bn2.");
    if (down_conv_) down_conv_->collect_params(out, prefix + "down.");
    if (down_bn_) down_bn_->collect_params(out, prefix + "down_bn.");
  }

  void collect_buffers(NamedTensors& out, const std::string& prefix) override {
    bn1_.collect_buffers(out, prefix + "bn1.");
    bn2_.collect_buffers(out, prefix + "bn2.");
    if (down_bn_) down_bn_->collect_buffers(out, prefix + "down_bn.");
  }

  Shape out_shape(const Shape& in) const override { return conv1_.out_shape(in); }

  std::string describe() const override {
    std::ostringstream os;
    os << "block " << in_c_ << " -> " << out_c_ << ", stride " << stride_ << ", ";
    switch (variant_) {
      case BlockVariant::baseline: os << "conv1>lif>bn1>conv2>bn2"; break;
      case BlockVariant::lif_after_bn: os << "conv1>bn1>lif>conv2>bn2"; break;
      case BlockVariant::lif_before_add: os << "conv1>lif>bn1>conv2>bn2>lif"; break;
    }
    os << (needs_projection_ ? " (+ projected skip)" : " (+ identity skip)") << " > lif_out";
    return os.str();
  }

  BlockVariant variant() const { return variant_; }
  Conv2dLayer& conv1() { return conv1_; }

 private:
  int in_c_, out_c_, stride_;
  BlockVariant variant_;
  Conv2dLayer conv1_;
  BatchNormLayer bn1_;
  Conv2dLayer conv2_;
  BatchNormLayer bn2_;
  LifLayer lif_inner_;
  LifLayer lif_out_;
  std::unique_ptr<LifLayer> lif_pre_add_;
  bool needs_projection_;
  std::unique_ptr<Conv2dLayer> down_conv_;
  std::unique_ptr<BatchNormLayer> down_bn_;
};

}  // namespace spikedisc
