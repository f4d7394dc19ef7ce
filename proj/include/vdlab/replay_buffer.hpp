#pragma once

#include <vector>

#include "vdlab/decpomdp.hpp"
#include "vdlab/errors.hpp"
#include "vdlab/rng.hpp"

namespace vdlab {

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InputError("ReplayBuffer: capacity must be > 0");
    entries_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }

  void push(Transition t) {
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(t));
    } else {
      entries_[write_cursor_] = std::move(t);
    }
    write_cursor_ = (write_cursor_ + 1) % capacity_;
  }

  bool ready(std::size_t batch_size) const { return size() >= batch_size; }

  /// Uniform sample with replacement. Callers must check ready() first;
  /// an underfilled buffer is a not-ready signal, not an error.
  std::vector<Transition> sample(std::size_t batch_size, Rng& rng) const {
    if (!ready(batch_size))
      throw InputError("ReplayBuffer: sample() on underfilled buffer");
    std::vector<Transition> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i)
      batch.push_back(entries_[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(entries_.size())))]);
    return batch;
  }

  const std::vector<Transition>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::size_t write_cursor_ = 0;
  std::vector<Transition> entries_;
};

}  // namespace vdlab
