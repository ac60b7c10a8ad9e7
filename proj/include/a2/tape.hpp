#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "a2/error.hpp"
#include "a2/tensor.hpp"

namespace a2 {

// Reverse-mode gradient tape (Wengert list). Ops append a backward closure
// per recorded node; node order equals forward execution order and backward()
// replays the list in reverse, accumulating gradients additively across
// fan-out. A tape is confined to one logical worker and is meant to live for
// a single training step.
template <typename T>
class Tape {
 public:
  Tape() : epoch_(next_epoch_.fetch_add(1, std::memory_order_relaxed)) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint32_t epoch() const { return epoch_; }

  bool tracks(const Tensor<T>& t) const {
    return t.tape_id >= 0 && t.tape_epoch == epoch_ &&
           static_cast<std::size_t>(t.tape_id) < shapes_.size();
  }

  // Registers a tensor (leaf or op output) and hands out its id.
  int track(Tensor<T>& t) {
    if (tracks(t)) return t.tape_id;
    const int id = static_cast<int>(shapes_.size());
    shapes_.push_back(t.shape());
    grads_.emplace_back();
    t.tape_id = id;
    t.tape_epoch = epoch_;
    return id;
  }

  // Leaf registration: every parameter to differentiate is watched up front.
  int watch(Tensor<T>& t) { return track(t); }

  void record(std::function<void(Tape&)> backward_fn) {
    if (backward_done_) {
      throw ContractError("tape already ran backward; tapes are single-use");
    }
    nodes_.push_back(std::move(backward_fn));
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays nodes in reverse append order.
  void backward(const Tensor<T>& loss) {
    if (!loss.is_scalar()) {
      throw ContractError("backward requires a scalar loss, shape is " + shape_str(loss.shape()));
    }
    if (!tracks(loss)) {
      throw ContractError("loss tensor was not produced on this tape");
    }
    if (backward_done_) {
      throw ContractError("tape already ran backward; tapes are single-use");
    }
    backward_done_ = true;
    grads_[static_cast<std::size_t>(loss.tape_id)] = Tensor<T>::scalar_of(T(1));
    for (std::size_t i = nodes_.size(); i > 0; --i) {
      nodes_[i - 1](*this);
    }
  }

  // Gradient of a tracked tensor; null when no gradient reached it.
  const Tensor<T>* grad(const Tensor<T>& t) const {
    if (!tracks(t)) return nullptr;
    return grad_by_id(t.tape_id);
  }

  const Tensor<T>* grad_by_id(int id) const {
    const auto& g = grads_[static_cast<std::size_t>(id)];
    return g.defined() ? &g : nullptr;
  }

  // Zero-initialized accumulator slot, created on first use. Backward
  // closures add into this.
  Tensor<T>& grad_slot(int id) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (!g.defined()) g = Tensor<T>(shapes_[static_cast<std::size_t>(id)]);
    return g;
  }

 private:
  std::vector<std::function<void(Tape&)>> nodes_;
  std::vector<Tensor<T>> grads_;
  std::vector<Shape> shapes_;
  std::uint32_t epoch_;
  bool backward_done_ = false;

  static inline std::atomic<std::uint32_t> next_epoch_{1};
};

}  // namespace a2
