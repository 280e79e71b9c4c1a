#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "isq/ismdp.hpp"
#include "isq/rng.hpp"

namespace isq {

// One macro step of experience: the K phase states and actions, the reward
// delivered at the final phase, and the next phase-0 state. Intermediate
// transitions are deterministic, so the chain is the natural replay unit.
struct ReplayChain {
  std::vector<PhaseState> states;
  std::vector<PhaseAction> actions;
  double reward = 0.0;
  PhaseState next0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  }

  void push(ReplayChain chain) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(chain));
    } else {
      data_[next_] = std::move(chain);
    }
    next_ = (next_ + 1) % capacity_;
    ++insertions_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t insertions() const { return insertions_; }

  const ReplayChain& sample(SeededRng& rng) const {
    if (data_.empty()) throw std::runtime_error("ReplayBuffer: empty");
    return data_[static_cast<std::size_t>(rng.uniform_int(data_.size()))];
  }

  const ReplayChain& at(std::size_t i) const { return data_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::size_t insertions_ = 0;
  std::vector<ReplayChain> data_;
};

}  // namespace isq
