#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "spikedisc/analysis/discrimination.hpp"
#include "spikedisc/io/checkpoint.hpp"
#include "spikedisc/losses/losses.hpp"
#include "spikedisc/models/graph.hpp"
#include "spikedisc/train/avtoy.hpp"
#include "spikedisc/train/config.hpp"
#include "spikedisc/train/optim.hpp"

namespace spikedisc::train {

// Uniform view the trainer consumes: one tensor per sample plus labels and a
// train/test split. Both raw modalities and fused feature rows fit it.
struct TensorDataset {
  int classes = 0;
  std::vector<Tensor> samples;
  std::vector<int> labels;
  std::vector<int> train_idx;
  std::vector<int> test_idx;

  const std::vector<int>& split(const std::string& name) const {
    if (name == "train") return train_idx;
    if (name == "test") return test_idx;
    throw ConfigError("unknown split '" + name + "' (expected train or test)");
  }
  std::vector<int> all_idx() const {
    std::vector<int> all(samples.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
};

inline TensorDataset visual_view(const AvToyDataset& av) {
  TensorDataset d;
  d.classes = av.classes;
  d.samples = av.images;
  d.labels = av.labels;
  d.train_idx = av.train_idx;
  d.test_idx = av.test_idx;
  return d;
}

inline TensorDataset audio_view(const AvToyDataset& av) {
  TensorDataset d;
  d.classes = av.classes;
  d.samples = av.logmels;
  d.labels = av.labels;
  d.train_idx = av.train_idx;
  d.test_idx = av.test_idx;
  return d;
}

// Builds the network matching the experiment's modality. input_shape is the
// per-sample shape actually found in the data; the config only fixes widths,
// depths and neuron settings.
inline ModelGraph model_for(const ExperimentConfig& cfg, int classes, const Shape& input_shape) {
  if (cfg.modality == "visual") {
    if (input_shape.size() != 3)
      throw ConfigError("visual samples must be [channels, height, width], got " + shape_str(input_shape));
    VisualModelConfig m;
    m.in_channels = input_shape[0];
    m.height = input_shape[1];
    m.width = input_shape[2];
    m.stage_widths = cfg.widths;
    m.blocks_per_stage = cfg.blocks_per_stage;
    m.classes = classes;
    m.timesteps = cfg.time_steps;
    m.head = cfg.head;
    m.block_variant = cfg.block_variant;
    m.lif = cfg.lif;
    return build_visual(m);
  }
  if (cfg.modality == "audio") {
    if (input_shape.size() != 3 || input_shape[0] != 1)
      throw ConfigError("audio samples must be [1, mels, frames], got " + shape_str(input_shape));
    AudioModelConfig m;
    m.mel_bins = input_shape[1];
    m.frames = input_shape[2];
    m.channels = cfg.audio_channels;
    m.dropout_p = cfg.dropout;
    m.with_dropout = cfg.dropout > 0.0;
    m.with_third_block = cfg.audio_third_block;
    m.with_pooling = cfg.audio_pooling;
    m.classes = classes;
    m.timesteps = cfg.time_steps;
    m.head = cfg.head;
    m.lif = cfg.lif;
    return build_audio(m);
  }
  if (input_shape.size() != 1) throw ConfigError("fusion samples must be flat vectors, got " + shape_str(input_shape));
  FusionConfig f;
  f.input_dim = input_shape[0];
  f.hidden = cfg.fusion.hidden;
  f.classes = classes;
  f.timesteps = cfg.fusion.time_steps;
  f.head = cfg.fusion.head;
  f.lif = cfg.lif;
  return build_smlp(f);
}

struct EvalOutcome {
  double loss = 0.0;
  EvalStats stats;
};

inline EvalOutcome evaluate(ModelGraph& model, const TensorDataset& data, const std::vector<int>& idx,
                            const ExperimentConfig& cfg) {
  if (idx.empty()) throw ContractError("evaluate needs a non-empty index set");
  EvalOutcome out;
  const int classes = model.classes();
  std::vector<double> all_counts;
  all_counts.reserve(idx.size() * static_cast<std::size_t>(classes));
  std::vector<int> all_labels;
  all_labels.reserve(idx.size());
  for (std::size_t from = 0; from < idx.size(); from += static_cast<std::size_t>(cfg.batch_size)) {
    std::size_t cur = std::min<std::size_t>(cfg.batch_size, idx.size() - from);
    Tensor x = stack_samples(data.samples, idx, from, cur);
    std::vector<int> lab = gather_labels(data.labels, idx, from, cur);
    StepContext ctx;
    auto r = model.forward_multistep(x, ctx);
    Tensor tg = spike_targets(lab, classes, model.timesteps(), cfg.rates);
    out.loss += mse_count_loss(r.counts, tg, nullptr).item() * static_cast<double>(cur);
    const double* c = r.counts.data();
    all_counts.insert(all_counts.end(), c, c + r.counts.numel());
    all_labels.insert(all_labels.end(), lab.begin(), lab.end());
  }
  out.loss /= static_cast<double>(idx.size());
  Tensor counts = Tensor::from({static_cast<int>(idx.size()), classes}, std::move(all_counts));
  out.stats = accuracy_and_confusion(counts, all_labels);
  return out;
}

// Per-sample feature rows from the trunk, before the head: the timestep mean
// when mirroring what a cosine head sees, or the running sum when feeding the
// fusion network.
inline Tensor capture_features(ModelGraph& model, const TensorDataset& data, const std::vector<int>& idx,
                               int batch_size, bool accumulate) {
  if (idx.empty()) throw ContractError("capture_features needs a non-empty index set");
  const int d = model.feature_dim();
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), d});
  double* dst = out.data();
  for (std::size_t from = 0; from < idx.size(); from += static_cast<std::size_t>(batch_size)) {
    std::size_t cur = std::min<std::size_t>(batch_size, idx.size() - from);
    Tensor x = stack_samples(data.samples, idx, from, cur);
    StepContext ctx;
    auto r = model.forward_multistep(x, ctx);
    Tensor f = accumulate ? ModelGraph::accumulate_features(r.z_steps) : ops::mean_list(r.z_steps, nullptr);
    std::copy(f.data(), f.data() + f.numel(), dst + from * static_cast<std::size_t>(d));
  }
  return out;
}

// Exported banks hold the accumulated (summed) per-sample features. For a
// cosine readout the direction is all that matters, and sum and mean differ
// by the positive factor T, so the distance statistics are unaffected.
inline analysis::FeatureBank make_bank(ModelGraph& model, const TensorDataset& data, const std::vector<int>& idx,
                                       int batch_size, nlohmann::json meta) {
  analysis::FeatureBank bank;
  bank.features = capture_features(model, data, idx, batch_size, true);
  for (int i : idx) bank.labels.push_back(data.labels[i]);
  bank.meta = std::move(meta);
  bank.validate();
  return bank;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0, train_loss = 0, train_acc = 0, test_loss = 0, test_acc = 0;
};

inline std::string metrics_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g", e.epoch, e.lr, e.train_loss, e.train_acc,
                e.test_loss, e.test_acc);
  return buf;
}

inline constexpr const char* kMetricsHeader = "epoch,lr,train_loss,train_acc,test_loss,test_acc";

struct TrainOutcome {
  std::vector<EpochLog> logs;
  double best_test_acc = -1.0;
  int best_epoch = 0;
  std::string best_path, last_path, metrics_path;
};

namespace detail {

inline EpochLog parse_metrics_row(const std::string& line, const std::string& where) {
  EpochLog e;
  if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &e.epoch, &e.lr, &e.train_loss, &e.train_acc, &e.test_loss,
                  &e.test_acc) != 6)
    throw ConfigError(where + ": malformed metrics row '" + line + "'");
  return e;
}

}  // namespace detail

// Full training loop. Every random draw comes from a stream derived from
// (seed, purpose, epoch), so a fresh run and a run resumed from any epoch
// produce identical parameters and byte-identical metrics. Writes
// metrics.csv, last.spkc (with optimizer state) and best.spkc to out_dir.
inline TrainOutcome train_model(const ExperimentConfig& cfg, ModelGraph& model, const TensorDataset& data,
                                const std::string& resume_path = "", bool quiet = false) {
  namespace fs = std::filesystem;
  if (model.classes() != data.classes)
    throw ConfigError("model has " + std::to_string(model.classes()) + " classes, dataset has " +
                      std::to_string(data.classes));
  if (data.train_idx.empty() || data.test_idx.empty()) throw ConfigError("dataset needs both train and test samples");
  fs::create_directories(cfg.out_dir);

  TrainOutcome out;
  out.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  out.best_path = (fs::path(cfg.out_dir) / "best.spkc").string();
  out.last_path = (fs::path(cfg.out_dir) / "last.spkc").string();
  const std::string hash = config_hash(cfg.raw);

  for (auto& [name, p] : model.named_params()) p.set_requires_grad(true);
  Adam adam(model.named_params(), cfg.adam);

  int start_epoch = 1;
  std::vector<std::string> rows;
  if (resume_path.empty()) {
    std::mt19937_64 init_rng = derived_rng(cfg.seed, "init", 0);
    model.init_params(init_rng);
  } else {
    io::Checkpoint ck = io::load_checkpoint(resume_path);
    if (ck.config_hash != hash)
      throw ConfigError("checkpoint " + resume_path + " was written under config " + ck.config_hash +
                        ", current config is " + hash);
    io::apply_checkpoint(model, ck);
    if (!ck.optim.empty()) adam.restore(ck.optim);
    start_epoch = ck.epoch + 1;
    std::ifstream mf(out.metrics_path);
    if (mf) {
      std::string line;
      std::getline(mf, line);  // header
      while (std::getline(mf, line) && !line.empty()) {
        EpochLog e = detail::parse_metrics_row(line, out.metrics_path);
        if (e.epoch > ck.epoch) break;
        rows.push_back(line);
        out.logs.push_back(e);
        if (e.test_acc > out.best_test_acc) {
          out.best_test_acc = e.test_acc;
          out.best_epoch = e.epoch;
        }
      }
    }
  }

  // epochs may be 0: the run then just records its untouched initialization.
  if (start_epoch > cfg.epochs) {
    std::ofstream mf(out.metrics_path, std::ios::trunc);
    if (!mf) throw ConfigError("cannot write " + out.metrics_path);
    mf << kMetricsHeader << "\n";
    for (const auto& r2 : rows) mf << r2 << "\n";
    io::OptimState ost = adam.state();
    io::save_checkpoint(out.last_path, model, start_epoch - 1, hash, &ost);
    return out;
  }

  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    adam.set_lr(milestone_lr(cfg.adam.lr, cfg.milestones, cfg.gamma, epoch));

    std::vector<int> order = data.train_idx;
    std::mt19937_64 shuffle_rng = derived_rng(cfg.seed, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::mt19937_64 dropout_rng = derived_rng(cfg.seed, "dropout", epoch);

    for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t cur = std::min<std::size_t>(cfg.batch_size, order.size() - from);
      Tensor x = stack_samples(data.samples, order, from, cur);
      std::vector<int> lab = gather_labels(data.labels, order, from, cur);
      Tape tape;
      StepContext ctx;
      ctx.tape = &tape;
      ctx.training = true;
      ctx.rng = &dropout_rng;
      adam.zero_grad();
      auto r = model.forward_multistep(x, ctx);
      Tensor tg = spike_targets(lab, data.classes, model.timesteps(), cfg.rates);
      Tensor loss = mse_count_loss(r.counts, tg, &tape);
      if (ops::has_nan(loss)) throw NumericFault("nan training loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      adam.step();
    }

    EvalOutcome tr = evaluate(model, data, data.train_idx, cfg);
    EvalOutcome te = evaluate(model, data, data.test_idx, cfg);
    EpochLog log{epoch, adam.lr(), tr.loss, tr.stats.accuracy, te.loss, te.stats.accuracy};
    out.logs.push_back(log);
    rows.push_back(metrics_row(log));

    std::ofstream mf(out.metrics_path, std::ios::trunc);
    if (!mf) throw ConfigError("cannot write " + out.metrics_path);
    mf << kMetricsHeader << "\n";
    for (const auto& r2 : rows) mf << r2 << "\n";
    mf.close();

    io::OptimState ost = adam.state();
    io::save_checkpoint(out.last_path, model, epoch, hash, &ost);
    if (log.test_acc > out.best_test_acc) {
      out.best_test_acc = log.test_acc;
      out.best_epoch = epoch;
      io::save_checkpoint(out.best_path, model, epoch, hash);
    }
    if (!quiet)
      std::printf("epoch %d/%d  lr %.3g  train %.4f/%.3f  test %.4f/%.3f\n", epoch, cfg.epochs, log.lr, log.train_loss,
                  log.train_acc, log.test_loss, log.test_acc);
  }
  return out;
}

// Frozen-feature fusion inputs: both single-modality checkpoints are
// restored, every sample is pushed through its trunk, and the per-sample
// accumulated spike features are concatenated image-first.
inline TensorDataset fusion_features(const ExperimentConfig& cfg, const AvToyDataset& av) {
  if (cfg.fusion.visual_ckpt.empty() || cfg.fusion.audio_ckpt.empty())
    throw ConfigError("fusion needs visual_ckpt and audio_ckpt paths");
  io::Checkpoint vck = io::load_checkpoint(cfg.fusion.visual_ckpt);
  io::Checkpoint ack = io::load_checkpoint(cfg.fusion.audio_ckpt);
  ModelGraph vm = ModelGraph::from_spec(vck.graph_spec);
  io::apply_checkpoint(vm, vck);
  ModelGraph am = ModelGraph::from_spec(ack.graph_spec);
  io::apply_checkpoint(am, ack);
  if (vm.classes() != av.classes || am.classes() != av.classes)
    throw ConfigError("fusion checkpoints disagree with the dataset class count");

  TensorDataset vis = visual_view(av);
  TensorDataset aud = audio_view(av);
  std::vector<int> all = vis.all_idx();
  Tensor fv = capture_features(vm, vis, all, cfg.batch_size, true);
  Tensor fa = capture_features(am, aud, all, cfg.batch_size, true);
  Tensor cat = ops::concat_cols(fv, fa, nullptr);

  TensorDataset out;
  out.classes = av.classes;
  out.labels = av.labels;
  out.train_idx = av.train_idx;
  out.test_idx = av.test_idx;
  const int d = cat.dim(1);
  const double* src = cat.data();
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::vector<double> row(src + i * static_cast<std::size_t>(d), src + (i + 1) * static_cast<std::size_t>(d));
    out.samples.push_back(Tensor::from({d}, std::move(row)));
  }
  return out;
}

}  // namespace spikedisc::train
