#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcsfqf/agent.hpp"
#include "mcsfqf/env.hpp"
#include "mcsfqf/network.hpp"

namespace mcsfqf {

// Flat key=value run configuration. Unknown keys are rejected; defaults match
// the published parameter table.
struct RunConfig {
    // neuron constants
    double tau_L = 2.0, tau_A = 2.0, tau_B = 2.0;
    double g_A = 1.0, g_B = 1.0, g_L = 1.0;
    double v_th = 1.0, v_reset = 0.0;
    // model
    int T = 8;
    int N = 32;
    int M = 64;
    double C = 0.05;
    int enc_hidden = 128;
    int n_embed = 64;
    int n_mcn = 512;
    int n_hidden = 512;
    double input_gain = 2.5;
    double pop_lif_gain = 2.5;
    std::string mode = "mcs-fqf";  // mcs-fqf | s-fqf-pop | s-fqf
    std::string surrogate_center = "threshold";
    std::string fraction_grad = "paper";  // paper | softmax-chain
    // learning
    double lr_adam = 1.0e-4;
    double lr_rmsprop = 2.5e-9;
    double gamma = 0.99;
    double huber_epsilon = 1.0;
    int batch = 32;
    std::uint64_t buffer_capacity = 100000;
    int warmup = 1000;
    int target_sync = 1000;
    int train_every = 1;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_anneal_frac = 0.1;
    // environment
    std::string env = "chain-mdp";  // chain-mdp | gridworld | synthetic-image
    int chain_k = 5;
    double chain_left_reward = 0.3;
    double chain_right_reward_lo = 0.0;
    double chain_right_reward_hi = 2.0;
    int grid_w = 4;
    int grid_h = 4;
    int horizon = 100;
    int image_size = 40;
    // run control
    std::uint64_t seed = 0;
    std::uint64_t steps = 50000;
    std::string out = "out";
    std::uint64_t checkpoint_interval = 10000;
    // fault injection hook for the verification suite (empty = none)
    std::string verify_fault = "";

    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    std::vector<std::pair<std::string, std::string>> to_pairs() const;

    static RunConfig from_file(const std::string& path);
    void apply_overrides(const std::vector<std::string>& key_eq_value);

    EnvSpec env_spec() const;
    NetConfig net_config() const;
    AgentConfig agent_config() const;
    void validate() const;
};

}  // namespace mcsfqf
