#include "mcsfqf/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mcsfqf {

int EnvSpec::n_states() const {
    switch (kind) {
        case Kind::ChainMdp: return chain_k;
        default: return grid_w * grid_h;
    }
}

int EnvSpec::n_actions() const { return kind == Kind::ChainMdp ? 2 : 4; }

int EnvSpec::start_state() const { return kind == Kind::ChainMdp ? chain_k / 2 : 0; }

int EnvSpec::obs_dim() const {
    if (kind == Kind::SyntheticImage) return image_size * image_size;
    return n_states();
}

double EnvSpec::max_return() const {
    if (kind == Kind::ChainMdp) {
        double mx = 0.0;
        for (const auto& a : left_rewards) mx = std::max(mx, a.value);
        for (const auto& a : right_rewards) mx = std::max(mx, a.value);
        return mx;
    }
    return 1.0;
}

void EnvSpec::validate() const {
    if (kind == Kind::ChainMdp) {
        require(chain_k >= 2, "EnvSpec: chain needs at least 2 states");
        auto check = [](const std::vector<RewardAtom>& atoms, const char* side) {
            require(!atoms.empty(), std::string("EnvSpec: empty reward set on ") + side);
            double sum = 0.0;
            for (const auto& a : atoms) {
                require(a.prob > 0.0, "EnvSpec: reward atom probability must be positive");
                sum += a.prob;
            }
            require(std::abs(sum - 1.0) < 1e-9, "EnvSpec: reward probabilities must sum to 1");
        };
        check(left_rewards, "left");
        check(right_rewards, "right");
    } else {
        require(grid_w * grid_h >= 2, "EnvSpec: grid too small");
        if (kind == Kind::SyntheticImage)
            require(image_size >= 36, "EnvSpec: image too small for the conv encoder");
    }
    require(horizon >= 1, "EnvSpec: horizon must be positive");
}

Vec observe(const EnvSpec& spec, int state) {
    if (spec.kind != EnvSpec::Kind::SyntheticImage) {
        Vec obs(spec.n_states(), 0.0);
        obs[state] = 1.0;
        return obs;
    }
    const int s = spec.image_size;
    Vec img(s * s, 0.0);
    auto paint = [&](int cell, double value) {
        const int cx = cell % spec.grid_w, cy = cell / spec.grid_w;
        const int cw = s / spec.grid_w, ch = s / spec.grid_h;
        for (int y = cy * ch; y < (cy + 1) * ch; ++y)
            for (int x = cx * cw; x < (cx + 1) * cw; ++x) img[y * s + x] = value;
    };
    paint(spec.grid_w * spec.grid_h - 1, 0.5);  // goal
    paint(state, 1.0);                          // agent
    return img;
}

std::vector<Outcome> transitions(const EnvSpec& spec, int state, int action) {
    require(action >= 0 && action < spec.n_actions(), "env: invalid action index");
    require(state >= 0 && state < spec.n_states(), "env: invalid state index");
    std::vector<Outcome> out;
    if (spec.kind == EnvSpec::Kind::ChainMdp) {
        if (action == 0) {  // left
            if (state == 0) {
                for (const auto& a : spec.left_rewards) out.push_back({a.prob, a.value, 0, true});
            } else {
                out.push_back({1.0, 0.0, state - 1, false});
            }
        } else {  // right
            if (state == spec.chain_k - 1) {
                for (const auto& a : spec.right_rewards)
                    out.push_back({a.prob, a.value, state, true});
            } else {
                out.push_back({1.0, 0.0, state + 1, false});
            }
        }
        return out;
    }
    // gridworld moves: 0 up, 1 down, 2 left, 3 right; clamped at edges
    const int w = spec.grid_w;
    int x = state % w, y = state / w;
    switch (action) {
        case 0: y = std::max(0, y - 1); break;
        case 1: y = std::min(spec.grid_h - 1, y + 1); break;
        case 2: x = std::max(0, x - 1); break;
        default: x = std::min(w - 1, x + 1); break;
    }
    const int next = y * w + x;
    const int goal = spec.grid_w * spec.grid_h - 1;
    if (next == goal && state != goal) {
        out.push_back({1.0, 1.0, next, true});
    } else {
        out.push_back({1.0, 0.0, next, false});
    }
    return out;
}

int env_reset(Env& env, std::uint64_t seed) {
    env.spec.validate();
    env.rewards.seed = seed;
    env.rewards.tag = rng_tag::kEnv;
    env.rewards.counter = 0;
    env.state = env.spec.start_state();
    env.steps = 0;
    return env.state;
}

StepResult env_step(Env& env, int action) {
    const auto outcomes = transitions(env.spec, env.state, action);
    const Outcome* chosen = &outcomes[0];
    if (outcomes.size() > 1) {
        const double u = env.rewards.next_u01();
        double acc = 0.0;
        for (const auto& o : outcomes) {
            acc += o.prob;
            if (u < acc) {
                chosen = &o;
                break;
            }
            chosen = &o;
        }
    }
    StepResult r;
    r.next = chosen->next;
    r.reward = chosen->reward;
    r.terminal = chosen->terminal;
    env.steps += 1;
    if (!r.terminal && env.steps >= env.spec.horizon) r.truncated = true;
    env.state = r.next;
    return r;
}

double ReturnDistribution::mean() const {
    double m = 0.0;
    for (const auto& [v, p] : atoms) m += v * p;
    return m;
}

double ReturnDistribution::total_prob() const {
    double s = 0.0;
    for (const auto& [v, p] : atoms) s += p;
    return s;
}

namespace {

struct Enumerator {
    const EnvSpec& spec;
    const PolicyFn& policy;
    double gamma;
    std::size_t max_nodes;
    std::size_t nodes = 0;
    std::map<double, double> acc;

    void add_atom(double value, double prob) {
        // merge with an existing atom within 1e-12
        auto it = acc.lower_bound(value - 1e-12);
        if (it != acc.end() && std::abs(it->first - value) <= 1e-12) {
            it->second += prob;
        } else {
            acc[value] += prob;
        }
    }

    void expand(int state, int action, double prob, double partial, double disc, int depth) {
        if (++nodes > max_nodes)
            throw std::runtime_error("brute_force_return_distribution: state space too large");
        for (const auto& o : transitions(spec, state, action)) {
            const double p = prob * o.prob;
            const double ret = partial + disc * o.reward;
            if (o.terminal || depth + 1 >= spec.horizon) {
                add_atom(ret, p);
                continue;
            }
            const Vec probs = policy(o.next);
            for (int a = 0; a < spec.n_actions(); ++a) {
                if (probs[a] <= 0.0) continue;
                expand(o.next, a, p * probs[a], ret, disc * gamma, depth + 1);
            }
        }
    }
};

}  // namespace

ReturnDistribution brute_force_return_distribution(const EnvSpec& spec, const PolicyFn& policy,
                                                   int state, int action, double gamma,
                                                   std::size_t max_nodes) {
    spec.validate();
    Enumerator e{spec, policy, gamma, max_nodes, 0, {}};
    e.expand(state, action, 1.0, 0.0, 1.0, 0);
    ReturnDistribution dist;
    dist.atoms.assign(e.acc.begin(), e.acc.end());
    return dist;
}

Mat value_iteration_q(const EnvSpec& spec, double gamma, double tol) {
    spec.validate();
    const int S = spec.n_states(), A = spec.n_actions();
    Mat q(S, A, 0.0);
    Vec v(S, 0.0);
    for (int iter = 0; iter < 1'000'000; ++iter) {
        double delta = 0.0;
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                double val = 0.0;
                for (const auto& o : transitions(spec, s, a))
                    val += o.prob * (o.reward + (o.terminal ? 0.0 : gamma * v[o.next]));
                q(s, a) = val;
            }
        }
        for (int s = 0; s < S; ++s) {
            double best = q(s, 0);
            for (int a = 1; a < A; ++a) best = std::max(best, q(s, a));
            delta = std::max(delta, std::abs(best - v[s]));
            v[s] = best;
        }
        if (delta < tol) break;
    }
    return q;
}

double policy_value(const EnvSpec& spec, const PolicyFn& policy, int state, int action,
                    double gamma) {
    const int S = spec.n_states(), A = spec.n_actions();
    // backward induction over the truncation horizon
    Vec v(S, 0.0);
    for (int d = 0; d < spec.horizon - 1; ++d) {
        Vec nv(S, 0.0);
        for (int s = 0; s < S; ++s) {
            const Vec probs = policy(s);
            double val = 0.0;
            for (int a = 0; a < A; ++a) {
                if (probs[a] <= 0.0) continue;
                double qa = 0.0;
                for (const auto& o : transitions(spec, s, a))
                    qa += o.prob * (o.reward + (o.terminal ? 0.0 : gamma * v[o.next]));
                val += probs[a] * qa;
            }
            nv[s] = val;
        }
        v = nv;
    }
    double q = 0.0;
    for (const auto& o : transitions(spec, state, action))
        q += o.prob * (o.reward + (o.terminal ? 0.0 : gamma * v[o.next]));
    return q;
}

PolicyFn greedy_policy(const Mat& q) {
    return [q](int state) {
        Vec probs(q.cols, 0.0);
        std::size_t best = 0;
        for (std::size_t a = 1; a < q.cols; ++a)
            if (q(state, a) > q(state, best)) best = a;
        probs[best] = 1.0;
        return probs;
    };
}

double wasserstein1(const Vec& tau, const Vec& values, const ReturnDistribution& dist) {
    require(tau.size() == values.size() + 1, "wasserstein1: need N+1 fractions for N values");
    // Oracle quantile function: step function with jumps at cumulative probs.
    double w1 = 0.0;
    std::size_t k = 0;
    double cum = dist.atoms.empty() ? 1.0 : dist.atoms[0].second;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double lo = tau[i];
        const double hi = tau[i + 1];
        while (lo < hi - 1e-15) {
            while (k + 1 < dist.atoms.size() && cum <= lo + 1e-15) {
                ++k;
                cum += dist.atoms[k].second;
            }
            const double seg_hi = std::min(hi, k + 1 < dist.atoms.size() ? cum : hi);
            const double oracle = dist.atoms.empty() ? 0.0 : dist.atoms[k].first;
            w1 += (seg_hi - lo) * std::abs(values[i] - oracle);
            lo = seg_hi;
        }
    }
    return w1;
}

}  // namespace mcsfqf
