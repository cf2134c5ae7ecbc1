// Command line front end: synthetic data generation, training, evaluation,
// fusion, and embedding analysis over one shared set of file formats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikedisc/spikedisc.hpp"

namespace fs = std::filesystem;
using namespace spikedisc;
using nlohmann::json;

namespace {

train::AvToyDataset load_dataset(const std::string& dir, const train::ExperimentConfig& cfg) {
  audio::StftConfig stft;
  stft.n_fft = cfg.audio.n_fft;
  stft.hop = cfg.audio.hop;
  audio::MelConfig mel;
  mel.n_mels = cfg.audio.mels;
  mel.f_min = cfg.audio.fmin;
  mel.f_max = cfg.audio.fmax;
  return train::load_avtoy(dir, stft, mel, cfg.audio.frames);
}

void print_eval(const char* tag, const train::EvalOutcome& ev) {
  std::printf("%s: loss %.6f, accuracy %.4f\n", tag, ev.loss, ev.stats.accuracy);
  std::fputs(confusion_csv(ev.stats).c_str(), stdout);
}

// Spec-file values fill every field the command line left untouched.
void overlay_gen_spec(const std::string& spec_path, CLI::App* gen, train::AvToySpec& sp) {
  json root = train::toml::parse_file(spec_path);
  using train::detail::section_value;
  if (!gen->count("--classes")) sp.classes = section_value(root, "avtoy", "classes", sp.classes);
  if (!gen->count("--train-per-class"))
    sp.train_per_class = section_value(root, "avtoy", "train_per_class", sp.train_per_class);
  if (!gen->count("--test-per-class"))
    sp.test_per_class = section_value(root, "avtoy", "test_per_class", sp.test_per_class);
  if (!gen->count("--channels")) sp.channels = section_value(root, "avtoy", "channels", sp.channels);
  if (!gen->count("--height")) sp.height = section_value(root, "avtoy", "height", sp.height);
  if (!gen->count("--width")) sp.width = section_value(root, "avtoy", "width", sp.width);
  if (!gen->count("--sample-rate")) sp.sample_rate = section_value(root, "avtoy", "sample_rate", sp.sample_rate);
  if (!gen->count("--audio-len")) sp.audio_len = section_value(root, "avtoy", "audio_len", sp.audio_len);
  if (!gen->count("--visual-noise")) sp.visual_noise = section_value(root, "avtoy", "visual_noise", sp.visual_noise);
  if (!gen->count("--audio-noise")) sp.audio_noise = section_value(root, "avtoy", "audio_noise", sp.audio_noise);
  if (!gen->count("--seed")) sp.seed = section_value(root, "avtoy", "seed", sp.seed);
}

int cmd_gen_data(const std::string& out_dir, train::AvToySpec& sp) {
  json manifest = train::generate_avtoy(out_dir, sp);
  std::printf("wrote %s: %d classes, %d train + %d test samples per class\n", out_dir.c_str(), sp.classes,
              sp.train_per_class, sp.test_per_class);
  std::printf("image [%d, %d, %d], audio %d samples at %d Hz\n", sp.channels, sp.height, sp.width, sp.audio_len,
              sp.sample_rate);
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume, bool quiet) {
  train::ExperimentConfig cfg = train::load_experiment(config_path);
  if (cfg.modality == "fusion") throw ConfigError("fusion experiments run through the fuse subcommand");
  train::AvToyDataset av = load_dataset(cfg.data_dir, cfg);
  train::TensorDataset data = cfg.modality == "visual" ? train::visual_view(av) : train::audio_view(av);
  ModelGraph model = train::model_for(cfg, data.classes, data.samples[0].shape());
  if (!quiet) std::fputs(model.describe().c_str(), stdout);
  train::TrainOutcome out = train::train_model(cfg, model, data, resume, quiet);
  std::printf("best test accuracy %.4f at epoch %d\n", out.best_test_acc, out.best_epoch);
  std::printf("metrics: %s\ncheckpoints: %s, %s\n", out.metrics_path.c_str(), out.best_path.c_str(),
              out.last_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             const std::string& config_path, const std::string& bank_path) {
  train::ExperimentConfig cfg =
      config_path.empty() ? train::ExperimentConfig{} : train::load_experiment(config_path);
  io::Checkpoint ck = io::load_checkpoint(ckpt_path);
  ModelGraph model = ModelGraph::from_spec(ck.graph_spec);
  io::apply_checkpoint(model, ck);

  train::AvToyDataset av = load_dataset(data_dir, cfg);
  std::string modality;
  if (!av.images.empty() && model.input_shape() == av.images[0].shape())
    modality = "visual";
  else if (!av.logmels.empty() && model.input_shape() == av.logmels[0].shape())
    modality = "audio";
  else
    throw ConfigError("checkpoint input " + shape_str(model.input_shape()) + " matches neither modality in " +
                      data_dir);
  train::TensorDataset data = modality == "visual" ? train::visual_view(av) : train::audio_view(av);
  const std::vector<int>& idx = data.split(split);

  train::EvalOutcome ev = train::evaluate(model, data, idx, cfg);
  std::printf("%s %s (%zu samples, epoch %d)\n", modality.c_str(), split.c_str(), idx.size(), ck.epoch);
  print_eval("result", ev);

  if (!bank_path.empty()) {
    json meta{{"modality", modality}, {"split", split}, {"head", model.head().kind()}, {"data_dir", data_dir}};
    analysis::FeatureBank bank = train::make_bank(model, data, idx, cfg.batch_size, meta);
    analysis::save_bank(bank_path, bank);
    std::printf("feature bank: %s [%d x %d]\n", bank_path.c_str(), bank.size(), bank.dim());
  }
  return 0;
}

int cmd_fuse(const std::string& config_path, const std::string& visual_ckpt, const std::string& audio_ckpt,
             const std::string& resume, bool quiet) {
  train::ExperimentConfig cfg = train::load_experiment(config_path);
  if (cfg.modality != "fusion") throw ConfigError("fuse needs a config with modality = \"fusion\"");
  // Overrides land in raw as well so the config hash covers what actually ran.
  if (!visual_ckpt.empty()) {
    cfg.fusion.visual_ckpt = visual_ckpt;
    cfg.raw["fusion"]["visual_ckpt"] = visual_ckpt;
  }
  if (!audio_ckpt.empty()) {
    cfg.fusion.audio_ckpt = audio_ckpt;
    cfg.raw["fusion"]["audio_ckpt"] = audio_ckpt;
  }
  train::AvToyDataset av = load_dataset(cfg.data_dir, cfg);
  train::TensorDataset data = train::fusion_features(cfg, av);
  ModelGraph model = train::model_for(cfg, data.classes, data.samples[0].shape());
  if (!quiet) std::fputs(model.describe().c_str(), stdout);
  train::TrainOutcome out = train::train_model(cfg, model, data, resume, quiet);
  std::printf("best fused test accuracy %.4f at epoch %d\n", out.best_test_acc, out.best_epoch);
  std::printf("metrics: %s\ncheckpoints: %s, %s\n", out.metrics_path.c_str(), out.best_path.c_str(),
              out.last_path.c_str());
  return 0;
}

json analyze_one(const analysis::FeatureBank& bank, const std::string& heat_path, analysis::PairStats* stats_out) {
  std::vector<int> order = analysis::class_sorted_order(bank.labels);
  Tensor dist = analysis::cosine_distance_matrix(bank.features, order);
  std::vector<int> sorted_labels;
  for (int i : order) sorted_labels.push_back(bank.labels[i]);
  analysis::write_heatmap_csv(heat_path, dist, sorted_labels);

  analysis::PairStats st = analysis::intra_inter_stats(dist, sorted_labels);
  if (stats_out) *stats_out = st;
  json block;
  block["meta"] = bank.meta;
  block["samples"] = bank.size();
  block["dim"] = bank.dim();
  block["classes"] = bank.classes();
  block["pairs"] = analysis::pair_stats_json(st);
  return block;
}

int cmd_analyze(const std::string& bank_path, const std::string& bank2_path, const std::string& out_dir,
                const std::string& ckpt_path) {
  analysis::FeatureBank bank = analysis::load_bank(bank_path);
  fs::create_directories(out_dir);

  std::string heat_path = (fs::path(out_dir) / "heatmap.csv").string();
  analysis::PairStats st;
  json stats = analyze_one(bank, heat_path, &st);

  if (!bank2_path.empty()) {
    analysis::FeatureBank bank2 = analysis::load_bank(bank2_path);
    std::string heat2 = (fs::path(out_dir) / "heatmap2.csv").string();
    analysis::PairStats st2;
    stats["bank2"] = analyze_one(bank2, heat2, &st2);
    json cmp;
    cmp["separability"] = analysis::pair_stats_json(st)["separability"];
    cmp["separability2"] = analysis::pair_stats_json(st2)["separability"];
    cmp["first_bank_higher"] = st.separability > st2.separability;
    stats["comparison"] = cmp;
  }

  {
    // Self-check of the leaky integration closed form: random per-step
    // features through random class weights, recurrence against the series.
    std::mt19937_64 rng = derived_rng(165, "series-probe", 0);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    analysis::LemmaProbe probe;
    probe.beta = 0.9;
    probe.weights = Tensor(Shape{5, 3});
    for (std::size_t i = 0; i < probe.weights.numel(); ++i) probe.weights.data()[i] = uni(rng);
    for (int t = 0; t < 6; ++t) {
      Tensor f(Shape{4, 5});
      for (std::size_t i = 0; i < f.numel(); ++i) f.data()[i] = uni(rng);
      probe.features.push_back(f);
    }
    stats["integration_series_gap"] = analysis::lemma2_series_check(probe);
  }

  if (!ckpt_path.empty()) {
    io::Checkpoint ck = io::load_checkpoint(ckpt_path);
    ModelGraph model = ModelGraph::from_spec(ck.graph_spec);
    io::apply_checkpoint(model, ck);
    if (model.feature_dim() != bank.dim())
      throw ConfigError("bank dim " + std::to_string(bank.dim()) + " does not match checkpoint feature dim " +
                        std::to_string(model.feature_dim()));
    std::vector<Tensor> zs = {bank.features};
    StepContext ctx;
    Tensor logits = model.head().logits(zs, ctx);
    analysis::ReadoutAgreement rep = analysis::readout_agreement(logits, model.timesteps(), model.head_spike_config());
    stats["readout"] = {{"samples", rep.n},
                        {"ties", rep.ties},
                        {"agree", rep.agree},
                        {"mismatch", rep.mismatch},
                        {"consistent", rep.consistent()}};
  }

  std::string stats_path = (fs::path(out_dir) / "stats.json").string();
  std::ofstream sf(stats_path);
  if (!sf) throw ConfigError("cannot write " + stats_path);
  sf << stats.dump(2) << "\n";
  std::printf("%s\n", stats.dump(2).c_str());
  std::printf("heatmap: %s (+ .json sidecar)\nstats: %s\n", heat_path.c_str(), stats_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking network training and discrimination analysis"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a paired image/audio toy dataset");
  std::string gen_out, gen_spec;
  train::AvToySpec sp;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--spec", gen_spec, "dataset spec file ([avtoy] section, toml)");
  gen->add_option("--seed", sp.seed, "generator seed");
  gen->add_option("--classes", sp.classes, "number of classes");
  gen->add_option("--train-per-class", sp.train_per_class, "training samples per class");
  gen->add_option("--test-per-class", sp.test_per_class, "test samples per class");
  gen->add_option("--height", sp.height, "image height");
  gen->add_option("--width", sp.width, "image width");
  gen->add_option("--channels", sp.channels, "image channels");
  gen->add_option("--visual-noise", sp.visual_noise, "image noise level");
  gen->add_option("--audio-noise", sp.audio_noise, "waveform noise level");
  gen->add_option("--sample-rate", sp.sample_rate, "waveform sample rate");
  gen->add_option("--audio-len", sp.audio_len, "waveform length in samples");

  auto* tr = app.add_subcommand("train", "train a single-modality network from a config file");
  std::string tr_config, tr_resume;
  bool tr_quiet = false;
  tr->add_option("--config", tr_config, "experiment config (toml)")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");
  tr->add_flag("--quiet", tr_quiet, "suppress per-epoch output");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_config, ev_bank;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--config", ev_config, "config for frontend/batch settings");
  ev->add_option("--export-features", ev_bank, "write accumulated per-sample features to this bank file");

  auto* fu = app.add_subcommand("fuse", "train the fusion network over two frozen checkpoints");
  std::string fu_config, fu_visual, fu_audio, fu_resume;
  bool fu_quiet = false;
  fu->add_option("--config", fu_config, "fusion experiment config (toml)")->required();
  fu->add_option("--visual", fu_visual, "visual checkpoint (overrides the config)");
  fu->add_option("--audio", fu_audio, "audio checkpoint (overrides the config)");
  fu->add_option("--resume", fu_resume, "checkpoint to resume from");
  fu->add_flag("--quiet", fu_quiet, "suppress per-epoch output");

  auto* an = app.add_subcommand("analyze", "cosine heatmap and discrimination stats for a feature bank");
  std::string an_bank, an_bank2, an_out, an_ckpt;
  an->add_option("--bank", an_bank, "feature bank file")->required();
  an->add_option("--bank2", an_bank2, "second bank to compare against");
  an->add_option("--out", an_out, "output directory")->required();
  an->add_option("--ckpt", an_ckpt, "checkpoint for readout consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      if (!gen_spec.empty()) overlay_gen_spec(gen_spec, gen, sp);
      return cmd_gen_data(gen_out, sp);
    }
    if (tr->parsed()) return cmd_train(tr_config, tr_resume, tr_quiet);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_split, ev_config, ev_bank);
    if (fu->parsed()) return cmd_fuse(fu_config, fu_visual, fu_audio, fu_resume, fu_quiet);
    if (an->parsed()) return cmd_analyze(an_bank, an_bank2, an_out, an_ckpt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericFault& e) {
    std::fprintf(stderr, "numeric fault: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
