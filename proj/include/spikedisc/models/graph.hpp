#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedisc/layers/heads.hpp"
#include "spikedisc/layers/layers.hpp"
#include "spikedisc/layers/residual.hpp"

namespace spikedisc {

using json = nlohmann::json;

inline json surrogate_to_json(const SurrogateSpec& s) {
  return json{{"kind", surrogate_kind_name(s.kind)}, {"a", s.a}, {"k", s.k}, {"literal", s.literal}};
}

inline SurrogateSpec surrogate_from_json(const json& j) {
  SurrogateSpec s;
  std::string kind = j.value("kind", "arctan");
  if (kind == "arctan")
    s.kind = SurrogateKind::arctan;
  else if (kind == "fast_sigmoid")
    s.kind = SurrogateKind::fast_sigmoid;
  else
    throw ConfigError("unknown surrogate kind '" + kind + "'");
  s.a = j.value("a", 2.0);
  s.k = j.value("k", 5.0);
  s.literal = j.value("literal", false);
  return s;
}

inline json lif_to_json(const LIFConfig& c) {
  return json{{"beta", c.beta}, {"v_th", c.v_th}, {"reset", reset_mode_name(c.reset)},
              {"surrogate", surrogate_to_json(c.surrogate)}};
}

inline LIFConfig lif_from_json(const json& j) {
  LIFConfig c;
  c.beta = j.value("beta", 0.9);
  c.v_th = j.value("v_th", 1.0);
  std::string reset = j.value("reset", "subtract");
  if (reset == "subtract")
    c.reset = ResetMode::subtract;
  else if (reset == "zero")
    c.reset = ResetMode::zero;
  else if (reset == "none")
    c.reset = ResetMode::none;
  else
    throw ConfigError("unknown reset mode '" + reset + "'");
  if (j.contains("surrogate")) c.surrogate = surrogate_from_json(j.at("surrogate"));
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline std::unique_ptr<Layer> make_layer(const json& j) {
  std::string kind = j.value("kind", "");
  if (kind == "conv")
    return std::make_unique<Conv2dLayer>(j.at("in").get<int>(), j.at("out").get<int>(), j.value("k", 3),
                                         j.value("stride", 1), j.value("pad", 1));
  if (kind == "bn") return std::make_unique<BatchNormLayer>(j.at("ch").get<int>(), j.value("momentum", 0.1), j.value("eps", 1e-5));
  if (kind == "lif") return std::make_unique<LifLayer>(lif_from_json(j));
  if (kind == "maxpool") return std::make_unique<MaxPoolLayer>(j.value("k", 2), j.value("stride", 0));
  if (kind == "avgpool") return std::make_unique<GlobalAvgPoolLayer>();
  if (kind == "flatten") return std::make_unique<FlattenLayer>();
  if (kind == "dropout") return std::make_unique<DropoutLayer>(j.at("p").get<double>());
  if (kind == "linear")
    return std::make_unique<LinearLayer>(j.at("in").get<int>(), j.at("out").get<int>(), j.value("bias", true));
  if (kind == "block")
    return std::make_unique<ActAfterAdditionBlock>(j.at("in").get<int>(), j.at("out").get<int>(), j.value("stride", 1),
                                                   block_variant_from_name(j.value("variant", "baseline")),
                                                   lif_from_json(j.value("lif", json::object())));
  throw ConfigError("unknown layer kind '" + kind + "'");
}

// Multistep spiking network: an ordered layer stack run once per timestep
// (stateful LIF layers carry membrane across steps), a classification head on
// the per-step features, and an output LIF emitting the spike counts.
class ModelGraph {
 public:
  struct ForwardResult {
    Tensor counts;                 // [B x C] spike counts over T
    Tensor logits;                 // [B x C]
    std::vector<Tensor> z_steps;   // T entries of [B x d], pre-head features
  };

  static ModelGraph from_spec(const json& spec) {
    ModelGraph g;
    g.spec_ = spec;
    try {
      g.input_shape_ = spec.at("input").get<Shape>();
      g.timesteps_ = spec.at("timesteps").get<int>();
      g.classes_ = spec.at("classes").get<int>();
      if (g.timesteps_ <= 0) throw ConfigError("timesteps must be >= 1");
      if (g.classes_ <= 0) throw ConfigError("classes must be >= 1");

      Shape cur = g.input_shape_;
      int idx = 0;
      for (const auto& lj : spec.at("layers")) {
        auto layer = make_layer(lj);
        try {
          cur = layer->out_shape(cur);
        } catch (const DimensionError& e) {
          throw ConfigError("layer " + std::to_string(idx) + " (" + layer->describe() + "): " + e.what());
        }
        for (int d : cur)
          if (d < 1)
            throw ConfigError("layer " + std::to_string(idx) + " (" + layer->describe() + ") yields empty shape " +
                              shape_str(cur));
        g.layer_shapes_.push_back(cur);
        g.layers_.push_back(std::move(layer));
        ++idx;
      }
      if (cur.size() != 1)
        throw ConfigError("trunk must end in a flat feature vector, got " + shape_str(cur) +
                          " (add flatten or avgpool)");
      g.feature_dim_ = cur[0];

      const json& hj = spec.at("head");
      std::string hkind = hj.value("kind", "l2norm");
      if (hkind == "l2norm")
        g.head_ = std::make_unique<L2NormHead>(g.feature_dim_, g.classes_);
      else if (hkind == "vanilla")
        g.head_ = std::make_unique<VanillaHead>(g.feature_dim_, g.classes_);
      else
        throw ConfigError("unknown head kind '" + hkind + "'");
      g.head_spike_.scale = hj.value("scale", 0.0);
      g.head_spike_.lif = hj.contains("lif") ? lif_from_json(hj.at("lif")) : LIFConfig{};
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad model spec: ") + e.what());
    }
    return g;
  }

  void init_params(std::mt19937_64& rng) {
    for (auto& l : layers_) l->init_params(rng);
    head_->init_params(rng);
  }

  void reset_states() {
    for (auto& l : layers_) l->reset_state();
  }

  ForwardResult forward_multistep(const Tensor& batch, StepContext ctx) {
    check_batch(batch);
    reset_states();
    ForwardResult r;
    r.z_steps.reserve(timesteps_);
    for (int t = 0; t < timesteps_; ++t) {
      Tensor x = batch;
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i]->forward(x, ctx);
        if (ops::has_nan(x))
          throw NumericFault("nan activation at step " + std::to_string(t) + " in layer " + std::to_string(i) + " (" +
                             layers_[i]->describe() + ")");
      }
      r.z_steps.push_back(x);
    }
    r.logits = head_->logits(r.z_steps, ctx);
    if (ops::has_nan(r.logits)) throw NumericFault("nan in head logits");
    r.counts = head_to_spikes(r.logits, timesteps_, head_spike_, ctx.tape, ctx.relaxed);
    return r;
  }

  // Features accumulated over timesteps: row i is sum_t z_t[i, :].
  static Tensor accumulate_features(const std::vector<Tensor>& z_steps) {
    if (z_steps.empty()) throw ContractError("no features to accumulate");
    Tensor acc = z_steps[0].clone();
    for (std::size_t t = 1; t < z_steps.size(); ++t) {
      const double* p = z_steps[t].data();
      double* q = acc.data();
      for (std::size_t i = 0; i < acc.numel(); ++i) q[i] += p[i];
    }
    return acc;
  }

  NamedTensors named_params() {
    NamedTensors out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect_params(out, "layers." + std::to_string(i) + ".");
    head_->collect_params(out, "head.");
    return out;
  }

  NamedTensors named_buffers() {
    NamedTensors out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect_buffers(out, "layers." + std::to_string(i) + ".");
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& [name, t] : named_params()) n += t.numel();
    return n;
  }

  std::string describe() {
    std::ostringstream os;
    os << "input " << shape_str(input_shape_) << ", T=" << timesteps_ << ", classes=" << classes_ << "\n";
    for (std::size_t i = 0; i < layers_.size(); ++i)
      os << "  " << i << "  " << layers_[i]->describe() << "  -> " << shape_str(layer_shapes_[i]) << "\n";
    os << "  " << head_->describe() << ", output lif beta=" << head_spike_.lif.beta
       << " reset=" << reset_mode_name(head_spike_.lif.reset) << ", scale="
       << (head_spike_.scale > 0.0 ? head_spike_.scale : head_spike_.lif.v_th) << "\n";
    os << "  params " << param_count() << "\n";
    return os.str();
  }

  const json& spec() const { return spec_; }
  int timesteps() const { return timesteps_; }
  int classes() const { return classes_; }
  int feature_dim() const { return feature_dim_; }
  const Shape& input_shape() const { return input_shape_; }
  Head& head() { return *head_; }
  const HeadSpikeConfig& head_spike_config() const { return head_spike_; }
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

 private:
  void check_batch(const Tensor& batch) const {
    bool ok = batch.ndim() == static_cast<int>(input_shape_.size()) + 1;
    if (ok)
      for (std::size_t i = 0; i < input_shape_.size(); ++i) ok = ok && batch.dim(static_cast<int>(i) + 1) == input_shape_[i];
    if (!ok)
      throw DimensionError("batch " + shape_str(batch.shape()) + " does not match model input " +
                           shape_str(input_shape_));
  }

  json spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Shape> layer_shapes_;
  std::unique_ptr<Head> head_;
  HeadSpikeConfig head_spike_;
  Shape input_shape_;
  int timesteps_ = 0, classes_ = 0, feature_dim_ = 0;
};

// Residual image network: stem conv > lif > bn, four (by default) stages of
// act-after-addition blocks, global average pooling, cosine head. The full
// width config (64/128/256/512 on 32x32 inputs) lands on a 512-dim feature
// space; the desk preset divides widths by 8.
struct VisualModelConfig {
  int in_channels = 3;
  int height = 8, width = 8;
  std::vector<int> stage_widths = {8, 16, 32, 64};
  int blocks_per_stage = 2;
  int classes = 4;
  int timesteps = 4;
  std::string head = "l2norm";
  std::string block_variant = "baseline";
  LIFConfig lif;
  double head_scale = 0.0;
};

inline json visual_spec(const VisualModelConfig& c) {
  if (c.stage_widths.empty()) throw ConfigError("visual model needs at least one stage");
  json lifj = lif_to_json(c.lif);
  json lif_layer = lifj;
  lif_layer["kind"] = "lif";
  json layers = json::array();
  layers.push_back({{"kind", "conv"}, {"in", c.in_channels}, {"out", c.stage_widths[0]}, {"k", 3}, {"stride", 1}, {"pad", 1}});
  layers.push_back(lif_layer);
  layers.push_back({{"kind", "bn"}, {"ch", c.stage_widths[0]}});
  int prev = c.stage_widths[0];
  for (std::size_t s = 0; s < c.stage_widths.size(); ++s) {
    int w = c.stage_widths[s];
    for (int b = 0; b < c.blocks_per_stage; ++b) {
      int stride = (s > 0 && b == 0) ? 2 : 1;
      layers.push_back({{"kind", "block"}, {"in", prev}, {"out", w}, {"stride", stride},
                        {"variant", c.block_variant}, {"lif", lifj}});
      prev = w;
    }
  }
  layers.push_back({{"kind", "avgpool"}});
  return json{{"input", {c.in_channels, c.height, c.width}},
              {"timesteps", c.timesteps},
              {"classes", c.classes},
              {"layers", layers},
              {"head", {{"kind", c.head}, {"scale", c.head_scale}, {"lif", lifj}}}};
}

inline ModelGraph build_visual(const VisualModelConfig& c) { return ModelGraph::from_spec(visual_spec(c)); }

// Spectrogram network: conv > bn > lif > maxpool blocks over the [1 x mels x
// frames] log-mel image, optional dropout, flatten. With 64 mels, 427 frames
// and channels 16/32/64 the flattened feature space is 27136-dim.
struct AudioModelConfig {
  int mel_bins = 64;
  int frames = 12;
  std::vector<int> channels = {4, 8, 16};
  bool with_third_block = true;
  bool with_pooling = true;
  bool with_dropout = true;
  double dropout_p = 0.5;
  int classes = 4;
  int timesteps = 4;
  std::string head = "l2norm";
  LIFConfig lif;
  double head_scale = 0.0;
};

inline json audio_spec(const AudioModelConfig& c) {
  if (c.channels.size() < 2) throw ConfigError("audio model needs at least two conv blocks");
  std::size_t blocks = c.with_third_block ? c.channels.size() : std::min<std::size_t>(2, c.channels.size());
  json lifj = lif_to_json(c.lif);
  json lif_layer = lifj;
  lif_layer["kind"] = "lif";
  json layers = json::array();
  int prev = 1;
  for (std::size_t i = 0; i < blocks; ++i) {
    layers.push_back({{"kind", "conv"}, {"in", prev}, {"out", c.channels[i]}, {"k", 3}, {"stride", 1}, {"pad", 1}});
    layers.push_back({{"kind", "bn"}, {"ch", c.channels[i]}});
    layers.push_back(lif_layer);
    if (c.with_pooling) layers.push_back({{"kind", "maxpool"}, {"k", 2}});
    prev = c.channels[i];
  }
  if (c.with_dropout) layers.push_back({{"kind", "dropout"}, {"p", c.dropout_p}});
  layers.push_back({{"kind", "flatten"}});
  return json{{"input", {1, c.mel_bins, c.frames}},
              {"timesteps", c.timesteps},
              {"classes", c.classes},
              {"layers", layers},
              {"head", {{"kind", c.head}, {"scale", c.head_scale}, {"lif", lifj}}}};
}

inline ModelGraph build_audio(const AudioModelConfig& c) { return ModelGraph::from_spec(audio_spec(c)); }

// Fusion MLP over concatenated unimodal embeddings: input BN, then
// linear > bn > lif stacks, affine head, output LIF.
struct FusionConfig {
  int input_dim = 0;
  std::vector<int> hidden = {256, 64};
  int classes = 4;
  int timesteps = 8;
  std::string head = "vanilla";
  LIFConfig lif;
  double head_scale = 0.0;
};

inline json smlp_spec(const FusionConfig& c) {
  if (c.input_dim <= 0) throw ConfigError("fusion model needs a positive input dim");
  json lifj = lif_to_json(c.lif);
  json lif_layer = lifj;
  lif_layer["kind"] = "lif";
  json layers = json::array();
  layers.push_back({{"kind", "bn"}, {"ch", c.input_dim}});
  int prev = c.input_dim;
  for (int h : c.hidden) {
    layers.push_back({{"kind", "linear"}, {"in", prev}, {"out", h}, {"bias", false}});
    layers.push_back({{"kind", "bn"}, {"ch", h}});
    layers.push_back(lif_layer);
    prev = h;
  }
  return json{{"input", {c.input_dim}},
              {"timesteps", c.timesteps},
              {"classes", c.classes},
              {"layers", layers},
              {"head", {{"kind", c.head}, {"scale", c.head_scale}, {"lif", lifj}}}};
}

inline ModelGraph build_smlp(const FusionConfig& c) { return ModelGraph::from_spec(smlp_spec(c)); }

}  // namespace spikedisc
