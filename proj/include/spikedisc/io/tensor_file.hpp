#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spikedisc/core/tensor.hpp"

namespace spikedisc::io {

static_assert(std::endian::native == std::endian::little, "container files are little-endian");

// One container format for everything on disk: 8-byte magic, u64 header
// length, JSON header naming the tensors (shape, offset, count) plus free-form
// meta, then the payload of raw little-endian f64 values. Feature banks,
// sample images, and checkpoints differ only in magic and meta.
struct TensorFile {
  std::vector<std::pair<std::string, Tensor>> tensors;
  nlohmann::json meta = nlohmann::json::object();

  bool has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }
  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw ConfigError("container has no tensor named '" + name + "'");
  }
  void put(const std::string& name, Tensor t) { tensors.emplace_back(name, std::move(t)); }
};

inline constexpr char kTensorMagic[9] = "SPKTNSR1";
inline constexpr char kCheckpointMagic[9] = "SPKCKPT1";

inline void write_container(const std::string& path, const char magic[9], const TensorFile& tf) {
  nlohmann::json header;
  header["meta"] = tf.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tf.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
    offset += t.numel();
  }
  std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f.write(magic, 8);
  std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tf.tensors)
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!f) throw ConfigError("short write to " + path);
}

inline TensorFile read_container(const std::string& path, const char magic[9]) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  char got[8];
  f.read(got, 8);
  if (!f || std::string(got, 8) != std::string(magic, 8))
    throw ConfigError(path + " is not a '" + std::string(magic, 8) + "' container");
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw ConfigError(path + " is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + " has a corrupt header: " + e.what());
  }
  TensorFile tf;
  tf.meta = header.value("meta", nlohmann::json::object());
  for (const auto& tj : header.value("tensors", nlohmann::json::array())) {
    Shape shape = tj.at("shape").get<Shape>();
    std::size_t count = tj.at("count").get<std::size_t>();
    if (shape_numel(shape) != count) throw ConfigError(path + ": tensor header count does not match shape");
    std::vector<double> data(count);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw ConfigError(path + " is truncated inside tensor payload");
    tf.put(tj.at("name").get<std::string>(), Tensor::from(std::move(shape), std::move(data)));
  }
  return tf;
}

inline void write_tensor(const std::string& path, const Tensor& t, nlohmann::json meta = nlohmann::json::object()) {
  TensorFile tf;
  tf.meta = std::move(meta);
  tf.put("data", t.clone());
  write_container(path, kTensorMagic, tf);
}

inline Tensor read_tensor(const std::string& path) { return read_container(path, kTensorMagic).get("data").clone(); }

}  // namespace spikedisc::io
