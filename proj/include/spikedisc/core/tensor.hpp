#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikedisc/core/errors.hpp"

namespace spikedisc {

// Dense row-major shape. Empty shape = scalar-like 1-element tensors use {1}.
using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw DimensionError("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Value-semantics handle over shared storage. Copies alias the same buffer;
// clone() makes a deep copy. Values are immutable once an op consumed the
// tensor on a tape (single-writer rule), gradients accumulate during replay.
class Tensor {
  struct Storage {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first use
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;

 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : s_(std::make_shared<Storage>()) {
    s_->shape = std::move(shape);
    s_->value.assign(shape_numel(s_->shape), fill);
  }

  static Tensor from(Shape shape, std::vector<double> data) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    if (shape_numel(shape) != data.size())
      throw DimensionError("data size " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(data);
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

  bool defined() const { return static_cast<bool>(s_); }

  const Shape& shape() const { return storage().shape; }
  int ndim() const { return static_cast<int>(shape().size()); }
  int dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return storage().value.size(); }

  double* data() { return storage().value.data(); }
  const double* data() const { return storage().value.data(); }
  std::vector<double>& vec() { return storage().value; }
  const std::vector<double>& vec() const { return storage().value; }

  double item() const {
    if (numel() != 1) throw ContractError("item() needs a 1-element tensor, got " + shape_str(shape()));
    return storage().value[0];
  }

  Tensor& set_requires_grad(bool b = true) {
    storage().requires_grad = b;
    if (b) ensure_grad();
    return *this;
  }
  bool requires_grad() const { return defined() && s_->requires_grad; }

  // Gradient accessors are const: they mutate the shared storage, never the
  // handle, mirroring shared_ptr semantics. Backward closures hold const
  // copies of their operands and still accumulate into them.
  void ensure_grad() const {
    if (!s_) throw ContractError("use of undefined tensor");
    if (s_->grad.size() != s_->value.size()) s_->grad.assign(s_->value.size(), 0.0);
  }
  bool has_grad() const { return defined() && s_->grad.size() == s_->value.size(); }
  double* grad_data() const {
    ensure_grad();
    return s_->grad.data();
  }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw ContractError("gradient not allocated; run backward first");
    return s_->grad;
  }
  void zero_grad() const {
    if (defined() && !s_->grad.empty()) s_->grad.assign(s_->value.size(), 0.0);
  }

  Tensor clone() const {
    Tensor t;
    t.s_ = std::make_shared<Storage>(storage());
    return t;
  }

  // Storage identity; used as the node id on the tape.
  const void* id() const { return s_.get(); }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  Storage& storage() {
    if (!s_) throw ContractError("use of undefined tensor");
    return *s_;
  }
  const Storage& storage() const {
    if (!s_) throw ContractError("use of undefined tensor");
    return *s_;
  }
};

// Reverse-mode tape. Ops append nodes in execution order (hence already
// topologically sorted); backward() seeds d(loss)=1 and replays the closures
// once each, newest first. One writer per tape; independent tapes may run in
// parallel.
class Tape {
 public:
  struct Node {
    std::vector<const void*> inputs;
    const void* output;
    std::function<void()> backward;
  };

  void record(std::vector<const void*> inputs, const void* output, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(inputs), output, std::move(backward)});
  }

  void backward(Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("loss does not require grad; nothing to differentiate");
    loss.grad_data()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

}  // namespace spikedisc
