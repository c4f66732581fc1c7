#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "mcsfqf/common.hpp"
#include "mcsfqf/rng.hpp"

namespace mcsfqf {

struct RewardAtom {
    double value = 0.0;
    double prob = 1.0;
};

// Desk-scale environments with exactly enumerable dynamics. chain-mdp is a
// line of K states with stochastic terminal rewards at both exits; gridworld
// is a deterministic goal-reaching task; synthetic-image is the gridworld
// rendered as a small image for the convolutional encoder.
struct EnvSpec {
    enum class Kind { ChainMdp, Gridworld, SyntheticImage };
    Kind kind = Kind::ChainMdp;
    int chain_k = 5;
    std::vector<RewardAtom> left_rewards{{0.3, 1.0}};
    std::vector<RewardAtom> right_rewards{{0.0, 0.5}, {2.0, 0.5}};
    int grid_w = 4;
    int grid_h = 4;
    int horizon = 100;
    int image_size = 40;

    int n_states() const;
    int n_actions() const;
    int start_state() const;
    int obs_dim() const;
    double max_return() const;
    void validate() const;
};

// Observation for a state: one-hot for vector envs, rendered image for
// synthetic-image (agent block at 1.0, goal block at 0.5).
Vec observe(const EnvSpec& spec, int state);

struct Outcome {
    double prob = 1.0;
    double reward = 0.0;
    int next = 0;
    bool terminal = false;
};
std::vector<Outcome> transitions(const EnvSpec& spec, int state, int action);

struct Env {
    EnvSpec spec;
    RngStream rewards;
    int state = 0;
    int steps = 0;
};

int env_reset(Env& env, std::uint64_t seed);

struct StepResult {
    int next = 0;
    double reward = 0.0;
    bool terminal = false;
    bool truncated = false;  // horizon reached; episode ends without a terminal target
};
StepResult env_step(Env& env, int action);

// Exact discounted-return distribution of a (possibly stochastic) policy
// from (state, action), by exhaustive enumeration over outcome trees up to
// the spec horizon. Probability mass is conserved exactly; atoms within
// 1e-12 of each other are merged.
struct ReturnDistribution {
    std::vector<std::pair<double, double>> atoms;  // (value, prob), sorted by value
    double mean() const;
    double total_prob() const;
};

using PolicyFn = std::function<Vec(int state)>;  // action probabilities

ReturnDistribution brute_force_return_distribution(const EnvSpec& spec, const PolicyFn& policy,
                                                   int state, int action, double gamma,
                                                   std::size_t max_nodes = 10'000'000);

// Infinite-horizon optimal Q by value iteration.
Mat value_iteration_q(const EnvSpec& spec, double gamma, double tol = 1e-14);

// Finite-horizon policy value Q^pi_D(s, a) matching the enumerator's horizon
// truncation exactly.
double policy_value(const EnvSpec& spec, const PolicyFn& policy, int state, int action,
                    double gamma);

PolicyFn greedy_policy(const Mat& q);

// 1-Wasserstein distance between a piecewise-constant quantile function
// (value[i] on (tau[i], tau[i+1])) and the distribution's quantile function.
double wasserstein1(const Vec& tau, const Vec& values, const ReturnDistribution& dist);

}  // namespace mcsfqf
