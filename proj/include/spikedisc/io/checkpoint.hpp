#pragma once

#include <cstring>
#include <string>
#include <utility>

#include <json.hpp>

#include "spikedisc/io/tensor_file.hpp"
#include "spikedisc/models/graph.hpp"

namespace spikedisc::io {

// Optimizer state as stored in a checkpoint. Moment tensors are keyed by the
// parameter names they belong to; step counts bias correction.
struct OptimState {
  long step = 0;
  NamedTensors m;
  NamedTensors v;
  bool empty() const { return m.empty() && v.empty() && step == 0; }
};

struct Checkpoint {
  nlohmann::json graph_spec;
  int epoch = 0;
  std::string config_hash;
  NamedTensors params;
  NamedTensors buffers;
  OptimState optim;
};

inline void save_checkpoint(const std::string& path, ModelGraph& graph, int epoch,
                            const std::string& config_hash, const OptimState* optim = nullptr) {
  TensorFile tf;
  tf.meta["graph"] = graph.spec();
  tf.meta["epoch"] = epoch;
  tf.meta["config_hash"] = config_hash;
  tf.meta["adam_step"] = optim ? optim->step : 0;
  for (const auto& [name, t] : graph.named_params()) tf.put("param." + name, t.clone());
  for (const auto& [name, t] : graph.named_buffers()) tf.put("buffer." + name, t.clone());
  if (optim) {
    for (const auto& [name, t] : optim->m) tf.put("adam.m." + name, t.clone());
    for (const auto& [name, t] : optim->v) tf.put("adam.v." + name, t.clone());
  }
  write_container(path, kCheckpointMagic, tf);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  TensorFile tf = read_container(path, kCheckpointMagic);
  Checkpoint ck;
  ck.graph_spec = tf.meta.at("graph");
  ck.epoch = tf.meta.value("epoch", 0);
  ck.config_hash = tf.meta.value("config_hash", std::string());
  ck.optim.step = tf.meta.value("adam_step", 0L);
  for (auto& [name, t] : tf.tensors) {
    if (name.rfind("param.", 0) == 0)
      ck.params.emplace_back(name.substr(6), t);
    else if (name.rfind("buffer.", 0) == 0)
      ck.buffers.emplace_back(name.substr(7), t);
    else if (name.rfind("adam.m.", 0) == 0)
      ck.optim.m.emplace_back(name.substr(7), t);
    else if (name.rfind("adam.v.", 0) == 0)
      ck.optim.v.emplace_back(name.substr(7), t);
    else
      throw ConfigError(path + ": unrecognized checkpoint entry '" + name + "'");
  }
  return ck;
}

// Copies stored values into the live graph tensors, matched by name. The
// graph must expose exactly the stored parameter and buffer sets with the
// same shapes; anything else means the checkpoint belongs to another model.
inline void restore_tensors(NamedTensors live, const NamedTensors& stored, const char* what) {
  if (live.size() != stored.size())
    throw ConfigError(std::string("checkpoint ") + what + " count mismatch: model has " +
                      std::to_string(live.size()) + ", checkpoint has " + std::to_string(stored.size()));
  for (auto& [name, dst] : live) {
    const Tensor* src = nullptr;
    for (const auto& [sname, st] : stored)
      if (sname == name) {
        src = &st;
        break;
      }
    if (!src) throw ConfigError(std::string("checkpoint is missing ") + what + " '" + name + "'");
    if (src->shape() != dst.shape())
      throw ConfigError(std::string("checkpoint ") + what + " '" + name + "' has shape " + shape_str(src->shape()) +
                        ", model expects " + shape_str(dst.shape()));
    std::memcpy(dst.data(), src->data(), dst.numel() * sizeof(double));
  }
}

inline void apply_checkpoint(ModelGraph& graph, const Checkpoint& ck) {
  restore_tensors(graph.named_params(), ck.params, "parameter");
  restore_tensors(graph.named_buffers(), ck.buffers, "buffer");
}

}  // namespace spikedisc::io
