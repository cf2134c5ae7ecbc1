#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedisc/audio/frontend.hpp"
#include "spikedisc/core/rng.hpp"
#include "spikedisc/core/tensor.hpp"
#include "spikedisc/io/tensor_file.hpp"

namespace spikedisc::train {

// Paired two-modality toy data. Every sample carries the same label in both
// modalities: a small oriented grating (class encodes orientation) and a
// short harmonic tone clip (class encodes the fundamental). Noise levels are
// chosen so the image channel is the harder one, which is what makes fusing
// the two interesting.
struct AvToySpec {
  int classes = 4;
  int train_per_class = 24;
  int test_per_class = 8;
  int channels = 3;
  int height = 8;
  int width = 8;
  int sample_rate = 16000;
  int audio_len = 3840;  // n_fft 1024 + 11 hops of 256: twelve analysis frames
  double visual_noise = 0.9;
  double audio_noise = 0.05;
  std::uint64_t seed = 7;

  void validate() const {
    if (classes < 2) throw ConfigError("avtoy needs at least 2 classes");
    if (train_per_class < 1 || test_per_class < 1) throw ConfigError("avtoy needs at least 1 sample per class and split");
    if (channels < 1 || height < 2 || width < 2) throw ConfigError("avtoy image shape too small");
    if (audio_len < 2 || sample_rate < 2) throw ConfigError("avtoy audio shape too small");
    if (visual_noise < 0 || audio_noise < 0) throw ConfigError("avtoy noise levels must be non-negative");
  }
};

namespace detail {

inline Tensor make_grating(const AvToySpec& sp, int label, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double pi = std::numbers::pi;
  double theta = pi * (label + 0.3 * uni(rng)) / sp.classes;
  double phase = 2.0 * pi * (uni(rng) + 0.5);
  double kx = 2.0 * pi * 2.0 * std::cos(theta) / sp.height;
  double ky = 2.0 * pi * 2.0 * std::sin(theta) / sp.width;
  std::vector<double> amp(sp.channels);
  for (double& a : amp) a = 1.0 + 0.2 * uni(rng);
  Tensor img = Tensor::zeros({sp.channels, sp.height, sp.width});
  double* x = img.data();
  for (int c = 0; c < sp.channels; ++c)
    for (int i = 0; i < sp.height; ++i)
      for (int j = 0; j < sp.width; ++j)
        *x++ = amp[c] * std::sin(kx * i + ky * j + phase) + sp.visual_noise * gauss(rng);
  return img;
}

inline std::vector<float> make_tone(const AvToySpec& sp, int label, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double pi = std::numbers::pi;
  double f0 = 300.0 * std::pow(2.0, (label + 0.1 * uni(rng)) / sp.classes);
  const double harm_amp[3] = {1.0, 0.6, 0.35};
  double phases[3], amps[3];
  for (int h = 0; h < 3; ++h) {
    phases[h] = 2.0 * pi * (uni(rng) + 0.5);
    amps[h] = harm_amp[h] * (1.0 + 0.2 * uni(rng));
  }
  std::vector<double> wave(sp.audio_len);
  double peak = 0.0;
  for (int t = 0; t < sp.audio_len; ++t) {
    double s = 0.0;
    for (int h = 0; h < 3; ++h) s += amps[h] * std::sin(2.0 * pi * f0 * (h + 1) * t / sp.sample_rate + phases[h]);
    s += sp.audio_noise * gauss(rng);
    wave[t] = s;
    peak = std::max(peak, std::abs(s));
  }
  std::vector<float> out(sp.audio_len);
  double norm = peak > 0 ? 0.9 / peak : 1.0;
  for (int t = 0; t < sp.audio_len; ++t) out[t] = static_cast<float>(wave[t] * norm);
  return out;
}

inline std::string sample_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05d", id);
  return buf;
}

}  // namespace detail

// Writes DIR/manifest.json, DIR/img/*.spkt image tensors, and DIR/aud/*.f32
// waveforms (with their .json sidecars). Fully determined by spec.seed: each
// sample is drawn from its own derived stream, so ids, not generation order,
// define the data.
inline nlohmann::json generate_avtoy(const std::string& dir, const AvToySpec& sp) {
  sp.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "img");
  fs::create_directories(fs::path(dir) / "aud");

  nlohmann::json manifest;
  manifest["classes"] = sp.classes;
  manifest["image"] = {{"channels", sp.channels}, {"height", sp.height}, {"width", sp.width}};
  manifest["audio"] = {{"sample_rate", sp.sample_rate}, {"length", sp.audio_len}};
  manifest["seed"] = sp.seed;
  nlohmann::json samples = nlohmann::json::array();

  int id = 0;
  const int per_class = sp.train_per_class + sp.test_per_class;
  for (int c = 0; c < sp.classes; ++c) {
    for (int k = 0; k < per_class; ++k, ++id) {
      std::mt19937_64 rng = derived_rng(sp.seed, "avtoy-sample", id);
      std::string name = detail::sample_name(id);
      std::string img_rel = "img/" + name + ".spkt";
      std::string aud_rel = "aud/" + name + ".f32";

      Tensor img = detail::make_grating(sp, c, rng);
      io::write_tensor((fs::path(dir) / img_rel).string(), img, {{"label", c}});
      std::vector<float> wave = detail::make_tone(sp, c, rng);
      audio::write_wave_f32((fs::path(dir) / aud_rel).string(), wave, sp.sample_rate);

      samples.push_back({{"id", id},
                         {"label", c},
                         {"split", k < sp.train_per_class ? "train" : "test"},
                         {"image", img_rel},
                         {"audio", aud_rel}});
    }
  }
  manifest["samples"] = samples;

  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw ConfigError("cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
  return manifest;
}

// In-memory dataset: images as stored, waveforms already pushed through the
// log-mel frontend so training only ever sees tensors.
struct AvToyDataset {
  int classes = 0;
  nlohmann::json manifest;
  std::vector<Tensor> images;   // each [channels, height, width]
  std::vector<Tensor> logmels;  // each [1, mels, frames]
  std::vector<int> labels;
  std::vector<int> train_idx;
  std::vector<int> test_idx;

  const std::vector<int>& split(const std::string& name) const {
    if (name == "train") return train_idx;
    if (name == "test") return test_idx;
    throw ConfigError("unknown split '" + name + "' (expected train or test)");
  }
};

inline AvToyDataset load_avtoy(const std::string& dir, const audio::StftConfig& stft, const audio::MelConfig& mel,
                               int target_frames) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw ConfigError("no manifest.json in " + dir);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(dir + "/manifest.json is corrupt: " + e.what());
  }

  AvToyDataset ds;
  ds.manifest = manifest;
  ds.classes = manifest.at("classes").get<int>();
  int declared_sr = manifest.at("audio").at("sample_rate").get<int>();
  audio::StftConfig stft_eff = stft;
  stft_eff.sample_rate = declared_sr;

  for (const auto& s : manifest.at("samples")) {
    int label = s.at("label").get<int>();
    if (label < 0 || label >= ds.classes) throw ConfigError("manifest label out of range");
    ds.images.push_back(io::read_tensor((fs::path(dir) / s.at("image").get<std::string>()).string()));
    audio::WaveFile wf = audio::read_wave_f32((fs::path(dir) / s.at("audio").get<std::string>()).string());
    ds.logmels.push_back(audio::logmel(wf.samples, stft_eff, mel, target_frames));
    ds.labels.push_back(label);
    int idx = static_cast<int>(ds.labels.size()) - 1;
    std::string split = s.at("split").get<std::string>();
    (split == "train" ? ds.train_idx : ds.test_idx).push_back(idx);
  }
  if (ds.images.empty()) throw ConfigError(dir + " contains no samples");
  return ds;
}

// Gathers dataset rows into one batch tensor, stacking along a new leading
// axis. All picked tensors must share a shape.
inline Tensor stack_samples(const std::vector<Tensor>& pool, const std::vector<int>& idx, std::size_t from,
                            std::size_t count) {
  if (from + count > idx.size()) throw ContractError("batch slice out of range");
  std::vector<Tensor> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) rows.push_back(pool[idx[from + i]]);
  return ops::stack_axis0(rows, nullptr);
}

inline std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idx, std::size_t from,
                                      std::size_t count) {
  std::vector<int> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(labels[idx[from + i]]);
  return out;
}

}  // namespace spikedisc::train
