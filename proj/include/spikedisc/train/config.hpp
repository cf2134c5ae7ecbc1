#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedisc/core/rng.hpp"
#include "spikedisc/losses/losses.hpp"
#include "spikedisc/models/graph.hpp"
#include "spikedisc/train/optim.hpp"

namespace spikedisc::train {

// --- minimal TOML reader -----------------------------------------------
// Supports exactly what experiment files use: [sections], bare keys, quoted
// strings, numbers, booleans, and flat arrays, with # comments. Anything
// fancier (dotted keys, nested tables, multiline strings) is rejected loudly.

namespace toml {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_str && c == '\\') {
      ++i;
      continue;
    }
    if (c == '"') in_str = !in_str;
    if (c == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

inline nlohmann::json parse_scalar(const std::string& tok, const std::string& where) {
  if (tok.empty()) throw ConfigError(where + ": empty value");
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"') throw ConfigError(where + ": unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
      char c = tok[i];
      if (c == '\\') {
        if (i + 2 >= tok.size()) throw ConfigError(where + ": dangling escape");
        char e = tok[++i];
        if (e == '"' || e == '\\')
          out += e;
        else if (e == 'n')
          out += '\n';
        else if (e == 't')
          out += '\t';
        else
          throw ConfigError(where + ": unsupported escape \\" + std::string(1, e));
      } else if (c == '"') {
        throw ConfigError(where + ": stray quote inside string");
      } else {
        out += c;
      }
    }
    return out;
  }
  if (tok == "true") return true;
  if (tok == "false") return false;
  if (tok.front() == '{' || tok.front() == '[') throw ConfigError(where + ": nested values are not supported");
  try {
    nlohmann::json v = nlohmann::json::parse(tok);
    if (!v.is_number()) throw ConfigError(where + ": expected a number, got '" + tok + "'");
    return v;
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": cannot parse value '" + tok + "'");
  }
}

inline nlohmann::json parse_value(const std::string& tok, const std::string& where) {
  if (!tok.empty() && tok.front() == '[') {
    if (tok.back() != ']') throw ConfigError(where + ": unterminated array");
    nlohmann::json arr = nlohmann::json::array();
    std::string body = tok.substr(1, tok.size() - 2);
    std::string cur;
    bool in_str = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      char c = body[i];
      if (in_str && c == '\\' && i + 1 < body.size()) {
        cur += c;
        cur += body[++i];
        continue;
      }
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        arr.push_back(parse_scalar(trim(cur), where));
        cur.clear();
      } else {
        cur += c;
      }
    }
    std::string last = trim(cur);
    if (!last.empty())
      arr.push_back(parse_scalar(last, where));
    else if (!arr.empty())
      throw ConfigError(where + ": trailing comma in array");
    return arr;
  }
  return parse_scalar(tok, where);
}

inline nlohmann::json parse(const std::string& text, const std::string& filename = "config") {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* section = &root;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string where = filename + ":" + std::to_string(lineno);
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + ": malformed section header");
      std::string name = trim(s.substr(1, s.size() - 2));
      if (!valid_key(name)) throw ConfigError(where + ": bad section name '" + name + "'");
      if (root.contains(name)) throw ConfigError(where + ": duplicate section [" + name + "]");
      root[name] = nlohmann::json::object();
      section = &root[name];
      continue;
    }
    bool in_str = false;
    std::size_t eq = std::string::npos;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') in_str = !in_str;
      if (s[i] == '=' && !in_str) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) throw ConfigError(where + ": bad key '" + key + "'");
    if (section->contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    (*section)[key] = parse_value(trim(s.substr(eq + 1)), where);
  }
  return root;
}

inline nlohmann::json parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

}  // namespace toml

// --- experiment configuration ------------------------------------------

struct FusionRefs {
  std::vector<int> hidden = {256, 64};
  int time_steps = 8;
  std::string head = "vanilla";
  std::string visual_ckpt;
  std::string audio_ckpt;
};

struct AudioFrontendConfig {
  int mels = 64;
  int frames = 12;
  int n_fft = 1024;
  int hop = 256;
  double fmin = 0.0;
  double fmax = 8000.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string modality = "visual";  // visual | audio | fusion
  std::uint64_t seed = 1;
  int epochs = 30;
  int batch_size = 16;
  std::string data_dir = "data/avtoy";
  std::string out_dir = "runs/experiment";

  AdamConfig adam;                      // adam.lr is the base rate
  double gamma = 0.1;
  std::vector<int> milestones = {150, 275};

  int time_steps = 4;
  std::string head = "l2norm";  // l2norm | vanilla
  std::string block_variant = "baseline";
  std::vector<int> widths = {8, 16, 32, 64};
  int blocks_per_stage = 2;
  std::vector<int> audio_channels = {4, 8, 16};
  double dropout = 0.5;
  bool audio_third_block = true;  // ablation: drop the widest conv block
  bool audio_pooling = true;      // ablation: drop both pooling layers

  LIFConfig lif;
  AudioFrontendConfig audio;
  RateTargets rates;
  FusionRefs fusion;

  nlohmann::json raw;  // the merged config this was parsed from

  void validate() const {
    if (modality != "visual" && modality != "audio" && modality != "fusion")
      throw ConfigError("modality must be visual, audio, or fusion, got '" + modality + "'");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (adam.lr <= 0) throw ConfigError("lr must be positive");
    if (gamma <= 0) throw ConfigError("gamma must be positive");
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1]) throw ConfigError("milestones must be strictly increasing");
    if (time_steps < 1) throw ConfigError("time_steps must be >= 1");
    if (head != "l2norm" && head != "vanilla") throw ConfigError("head must be l2norm or vanilla, got '" + head + "'");
    block_variant_from_name(block_variant);  // throws on unknown names
    if (widths.size() != 4) throw ConfigError("widths must list 4 stage widths");
    if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
    if (audio_channels.size() != 3) throw ConfigError("audio channels must list 3 stage widths");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
    if (fusion.time_steps < 1) throw ConfigError("fusion time_steps must be >= 1");
    if (fusion.hidden.empty()) throw ConfigError("fusion hidden layers must not be empty");
    if (fusion.head != "l2norm" && fusion.head != "vanilla")
      throw ConfigError("fusion head must be l2norm or vanilla, got '" + fusion.head + "'");
    lif.validate();
    rates.validate();
  }
};

namespace detail {

template <typename T>
T section_value(const nlohmann::json& root, const char* sec, const char* key, T fallback) {
  if (!root.contains(sec)) return fallback;
  const nlohmann::json& s = root.at(sec);
  if (!s.contains(key)) return fallback;
  try {
    return s.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config [") + sec + "] " + key + " has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& root) {
  using detail::section_value;
  ExperimentConfig c;
  c.raw = root;
  c.name = section_value<std::string>(root, "experiment", "name", c.name);
  c.modality = section_value<std::string>(root, "experiment", "modality", c.modality);
  c.seed = section_value<std::uint64_t>(root, "experiment", "seed", c.seed);
  c.epochs = section_value<int>(root, "experiment", "epochs", c.epochs);
  c.batch_size = section_value<int>(root, "experiment", "batch_size", c.batch_size);
  c.data_dir = section_value<std::string>(root, "experiment", "data_dir", c.data_dir);
  c.out_dir = section_value<std::string>(root, "experiment", "out_dir", c.out_dir);

  c.adam.lr = section_value<double>(root, "optim", "lr", c.adam.lr);
  c.adam.weight_decay = section_value<double>(root, "optim", "weight_decay", c.adam.weight_decay);
  c.adam.beta1 = section_value<double>(root, "optim", "beta1", c.adam.beta1);
  c.adam.beta2 = section_value<double>(root, "optim", "beta2", c.adam.beta2);
  c.adam.eps = section_value<double>(root, "optim", "eps", c.adam.eps);
  c.gamma = section_value<double>(root, "optim", "gamma", c.gamma);
  c.milestones = section_value<std::vector<int>>(root, "optim", "milestones", c.milestones);

  c.time_steps = section_value<int>(root, "model", "time_steps", c.time_steps);
  c.head = section_value<std::string>(root, "model", "head", c.head);
  c.block_variant = section_value<std::string>(root, "model", "block_variant", c.block_variant);
  c.widths = section_value<std::vector<int>>(root, "model", "widths", c.widths);
  c.blocks_per_stage = section_value<int>(root, "model", "blocks_per_stage", c.blocks_per_stage);
  c.audio_channels = section_value<std::vector<int>>(root, "model", "audio_channels", c.audio_channels);
  c.dropout = section_value<double>(root, "model", "dropout", c.dropout);
  c.audio_third_block = section_value<bool>(root, "model", "audio_third_block", c.audio_third_block);
  c.audio_pooling = section_value<bool>(root, "model", "audio_pooling", c.audio_pooling);

  if (root.contains("lif")) c.lif = lif_from_json(root.at("lif"));
  if (root.contains("surrogate")) c.lif.surrogate = surrogate_from_json(root.at("surrogate"));

  c.audio.mels = section_value<int>(root, "audio", "mels", c.audio.mels);
  c.audio.frames = section_value<int>(root, "audio", "frames", c.audio.frames);
  c.audio.n_fft = section_value<int>(root, "audio", "n_fft", c.audio.n_fft);
  c.audio.hop = section_value<int>(root, "audio", "hop", c.audio.hop);
  c.audio.fmin = section_value<double>(root, "audio", "fmin", c.audio.fmin);
  c.audio.fmax = section_value<double>(root, "audio", "fmax", c.audio.fmax);

  c.rates.correct = section_value<double>(root, "loss", "r_correct", c.rates.correct);
  c.rates.incorrect = section_value<double>(root, "loss", "r_incorrect", c.rates.incorrect);

  c.fusion.hidden = section_value<std::vector<int>>(root, "fusion", "hidden", c.fusion.hidden);
  c.fusion.time_steps = section_value<int>(root, "fusion", "time_steps", c.fusion.time_steps);
  c.fusion.head = section_value<std::string>(root, "fusion", "head", c.fusion.head);
  c.fusion.visual_ckpt = section_value<std::string>(root, "fusion", "visual_ckpt", c.fusion.visual_ckpt);
  c.fusion.audio_ckpt = section_value<std::string>(root, "fusion", "audio_ckpt", c.fusion.audio_ckpt);

  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) { return experiment_from_json(toml::parse_file(path)); }

// Stable fingerprint of the effective configuration; resume refuses to mix
// checkpoints across configs. nlohmann::json keeps object keys sorted, so
// dump() is canonical. Keys that cannot change the training trajectory up to
// the checkpointed epoch are left out: the epoch budget (so a run can be
// extended), the run name, and the output directory (so runs can be moved).
inline std::string config_hash(const nlohmann::json& raw) {
  nlohmann::json pruned = raw;
  if (pruned.contains("experiment")) {
    auto& e = pruned["experiment"];
    e.erase("epochs");
    e.erase("name");
    e.erase("out_dir");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(pruned.dump())));
  return buf;
}

}  // namespace spikedisc::train
