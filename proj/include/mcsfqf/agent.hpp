#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mcsfqf/env.hpp"
#include "mcsfqf/learning.hpp"
#include "mcsfqf/network.hpp"
#include "mcsfqf/replay.hpp"

namespace mcsfqf {

struct AgentConfig {
    NetConfig net;
    LossConfig loss;
    double lr_adam = 1e-4;
    double lr_rmsprop = 2.5e-9;
    FractionGradMode fraction_grad = FractionGradMode::Paper;
    int batch = 32;
    int warmup = 1000;
    std::size_t buffer_capacity = 100000;
    int target_sync = 1000;  // gradient steps between target refreshes
    int train_every = 1;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_anneal_frac = 0.1;
    std::uint64_t seed = 0;
    std::uint64_t max_steps = 50000;
};

struct MetricsRecord {
    std::uint64_t step = 0;
    std::uint64_t episode = 0;
    bool episode_end = false;
    double episode_return = 0.0;  // return of the episode that just ended
    double loss_huber = 0.0;
    double loss_wasserstein = 0.0;
    double epsilon = 0.0;
    double fraction_entropy = 0.0;
    bool trained = false;
};

// Thrown when the optimisation produces a non-finite loss or gradient.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Trainer {
  public:
    Trainer(const AgentConfig& cfg, const EnvSpec& env_spec);

    // One environment step and, past warmup, one gradient step.
    MetricsRecord iterate();

    double epsilon_at(std::uint64_t step) const;
    Vec q_for(int state) const;           // greedy-evaluation forward
    Vec q_for(int state, const NetworkParams& which) const;
    int greedy_action(int state) const;

    // Runs greedy episodes without learning; returns the episode returns.
    Vec evaluate(int episodes, std::uint64_t seed) const;

    const AgentConfig& config() const { return cfg_; }
    const EnvSpec& env_spec() const { return env_.spec; }

    AgentConfig cfg_;
    Env env_;
    NetworkParams params_;
    NetworkParams target_;
    AdamState adam_;
    RmspropState rms_;
    ReplayBuffer replay_;
    RngStream explore_;
    RngStream replay_rng_;
    std::uint64_t step_ = 0;
    std::uint64_t episode_ = 0;
    std::uint64_t grad_steps_ = 0;
    double episode_return_ = 0.0;

  private:
    struct UpdateStats {
        double huber = 0.0;
        double wasserstein = 0.0;
        double entropy = 0.0;
    };
    UpdateStats gradient_step();
};

}  // namespace mcsfqf
