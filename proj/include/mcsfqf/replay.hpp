#pragma once

#include <cstdint>
#include <vector>

#include "mcsfqf/common.hpp"
#include "mcsfqf/rng.hpp"

namespace mcsfqf {

struct Transition {
    int state = 0;
    int action = 0;
    double reward = 0.0;
    int next_state = 0;
    bool terminal = false;
};

// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        require(capacity > 0, "ReplayBuffer: capacity must be positive");
        data_.reserve(capacity);
    }

    void push(const Transition& t) {
        if (data_.size() < capacity_) {
            data_.push_back(t);
        } else {
            data_[pushes_ % capacity_] = t;
        }
        ++pushes_;
    }

    std::size_t size() const { return data_.size(); }
    std::uint64_t pushes() const { return pushes_; }
    void set_pushes(std::uint64_t n) { pushes_ = n; }

    std::vector<Transition> sample(std::size_t batch, RngStream& rng) const {
        require(!data_.empty(), "ReplayBuffer: cannot sample from an empty buffer");
        std::vector<Transition> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i)
            out.push_back(data_[rng.next_below(data_.size())]);
        return out;
    }

    const Transition& at(std::size_t i) const { return data_[i]; }

  private:
    std::size_t capacity_;
    std::uint64_t pushes_ = 0;
    std::vector<Transition> data_;
};

// argmax with lowest-index tie-break; with probability eps a uniform action.
int epsilon_greedy(const Vec& q, double eps, RngStream& rng);

}  // namespace mcsfqf
