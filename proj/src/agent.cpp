#include "mcsfqf/agent.hpp"

#include <algorithm>
#include <cmath>

namespace mcsfqf {

int epsilon_greedy(const Vec& q, double eps, RngStream& rng) {
    require(eps >= 0.0 && eps <= 1.0, "epsilon_greedy: eps outside [0, 1]");
    require(!q.empty(), "epsilon_greedy: empty action values");
    const double u = rng.next_u01();
    if (u < eps) return static_cast<int>(rng.next_below(q.size()));
    int best = 0;
    for (std::size_t a = 1; a < q.size(); ++a)
        if (q[a] > q[best]) best = static_cast<int>(a);
    return best;
}

Trainer::Trainer(const AgentConfig& cfg, const EnvSpec& env_spec)
    : cfg_(cfg),
      params_(NetworkParams::init(cfg.net, cfg.seed)),
      target_(params_),
      adam_(AdamState::make(cfg.net, cfg.lr_adam)),
      rms_(RmspropState::make(params_.w_f.rows, params_.w_f.cols, cfg.lr_rmsprop)),
      replay_(cfg.buffer_capacity) {
    env_.spec = env_spec;
    env_reset(env_, cfg.seed);
    explore_ = {cfg.seed, rng_tag::kExplore, 0};
    replay_rng_ = {cfg.seed, rng_tag::kReplay, 0};
    cfg_.loss.validate();
}

double Trainer::epsilon_at(std::uint64_t step) const {
    const double anneal_steps =
        std::max(1.0, cfg_.eps_anneal_frac * static_cast<double>(cfg_.max_steps));
    const double frac = std::min(1.0, static_cast<double>(step) / anneal_steps);
    return cfg_.eps_start + frac * (cfg_.eps_end - cfg_.eps_start);
}

Vec Trainer::q_for(int state) const { return q_for(state, params_); }

Vec Trainer::q_for(int state, const NetworkParams& which) const {
    TapeRecord t = full_forward(observe(env_.spec, state), which, cfg_.net);
    return t.estimate.q;
}

int Trainer::greedy_action(int state) const {
    const Vec q = q_for(state);
    int best = 0;
    for (std::size_t a = 1; a < q.size(); ++a)
        if (q[a] > q[best]) best = static_cast<int>(a);
    return best;
}

MetricsRecord Trainer::iterate() {
    MetricsRecord rec;
    const double eps = epsilon_at(step_);

    // action selection: skip the forward pass while acting fully at random
    int action;
    const double u = explore_.next_u01();
    if (u < eps) {
        action = static_cast<int>(explore_.next_below(env_.spec.n_actions()));
    } else {
        const Vec q = q_for(env_.state);
        int best = 0;
        for (std::size_t a = 1; a < q.size(); ++a)
            if (q[a] > q[best]) best = static_cast<int>(a);
        action = best;
    }

    const int state_before = env_.state;
    const StepResult sr = env_step(env_, action);
    replay_.push({state_before, action, sr.reward, sr.next, sr.terminal});
    episode_return_ += sr.reward;

    if (sr.terminal || sr.truncated) {
        rec.episode_end = true;
        rec.episode_return = episode_return_;
        episode_return_ = 0.0;
        episode_ += 1;
        env_.state = env_.spec.start_state();
        env_.steps = 0;
    }

    if (replay_.size() >= static_cast<std::size_t>(cfg_.warmup) &&
        step_ % static_cast<std::uint64_t>(cfg_.train_every) == 0) {
        const UpdateStats stats = gradient_step();
        rec.loss_huber = stats.huber;
        rec.loss_wasserstein = stats.wasserstein;
        rec.fraction_entropy = stats.entropy;
        rec.trained = true;
    }

    step_ += 1;
    rec.step = step_;
    rec.episode = episode_;
    rec.epsilon = eps;
    return rec;
}

Trainer::UpdateStats Trainer::gradient_step() {
    const auto batch = replay_.sample(cfg_.batch, replay_rng_);
    GradientSet grads = GradientSet::zeros(cfg_.net);
    Mat wf_grad(params_.w_f.rows, params_.w_f.cols);
    UpdateStats stats;

    const int N = cfg_.net.n_fractions;
    const int A = cfg_.net.n_actions;
    for (const Transition& tr : batch) {
        TapeRecord cur = full_forward(observe(env_.spec, tr.state), params_, cfg_.net);
        stats.entropy += cur.fractions.entropy();
        Vec cur_col(N);
        for (int i = 0; i < N; ++i) cur_col[i] = cur.estimate.values(i, tr.action);

        Vec next_col(N, 0.0);
        if (!tr.terminal) {
            TapeRecord nxt = full_forward(observe(env_.spec, tr.next_state), target_, cfg_.net);
            int best = 0;
            for (int a = 1; a < A; ++a)
                if (nxt.estimate.q[a] > nxt.estimate.q[best]) best = a;
            for (int i = 0; i < N; ++i) next_col[i] = nxt.estimate.values(i, best);
        }

        const Mat deltas =
            td_errors(tr.reward, next_col, cur_col, cfg_.loss.gamma, tr.terminal);
        stats.huber += huber_quantile_loss(cur.fractions.tau_hat, deltas, cfg_.loss.epsilon);
        const Vec vg = huber_quantile_loss_grad(cur.fractions.tau_hat, deltas, cfg_.loss.epsilon);
        Mat dvalues(N, A);
        for (int i = 0; i < N; ++i) dvalues(i, tr.action) = vg[i];
        stbp_backward(cur, dvalues, params_, cfg_.net, grads);

        // Wasserstein path for the fraction-proposal weights
        if (N > 1) {
            Vec interior(N - 1);
            for (int i = 1; i < N; ++i) interior[i - 1] = cur.fractions.tau[i];
            const Mat f_int =
                quantiles_at(cur, params_, cfg_.net, interior, static_cast<std::uint64_t>(N));
            Vec f_interior(N - 1), f_hat(N);
            for (int i = 0; i < N - 1; ++i) f_interior[i] = f_int(i, tr.action);
            for (int i = 0; i < N; ++i) f_hat[i] = cur.estimate.values(i, tr.action);
            const Vec wl_g = wasserstein_grad_tau(cur.fractions, f_interior, f_hat);
            const Mat dwf =
                fraction_weight_grad(cur.fractions, wl_g, cur.o_s(), cfg_.fraction_grad);
            for (std::size_t k = 0; k < wf_grad.a.size(); ++k) wf_grad.a[k] += dwf.a[k];
            // trapezoid proxy of the Wasserstein loss, logged only
            double wl = 0.0;
            for (int i = 0; i < N; ++i) {
                const double lo_gap = cur.fractions.tau_hat[i] - cur.fractions.tau[i];
                const double hi_gap = cur.fractions.tau[i + 1] - cur.fractions.tau_hat[i];
                const double f_lo = i == 0 ? f_hat[0] : f_interior[i - 1];
                const double f_hi = i == N - 1 ? f_hat[N - 1] : f_interior[i];
                wl += 0.5 * lo_gap * std::abs(f_lo - f_hat[i]) +
                      0.5 * hi_gap * std::abs(f_hi - f_hat[i]);
            }
            stats.wasserstein += wl;
        }
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    stats.huber *= inv_b;
    stats.wasserstein *= inv_b;
    stats.entropy *= inv_b;
    grads.scale(inv_b);
    for (double& g : wf_grad.a) g *= inv_b;

    if (!std::isfinite(stats.huber) || !grads.finite())
        throw DivergenceError("training diverged: non-finite Huber loss or gradient at step " +
                              std::to_string(step_));

    adam_step(adam_, params_, grads);
    rmsprop_step(rms_, params_.w_f, wf_grad);

    grad_steps_ += 1;
    if (grad_steps_ % static_cast<std::uint64_t>(cfg_.target_sync) == 0) target_ = params_;
    return stats;
}

Vec Trainer::evaluate(int episodes, std::uint64_t seed) const {
    Vec returns;
    Env env;
    env.spec = env_.spec;
    for (int ep = 0; ep < episodes; ++ep) {
        env_reset(env, seed + static_cast<std::uint64_t>(ep));
        double ret = 0.0;
        for (int t = 0; t < env.spec.horizon; ++t) {
            const Vec q = q_for(env.state);
            int best = 0;
            for (std::size_t a = 1; a < q.size(); ++a)
                if (q[a] > q[best]) best = static_cast<int>(a);
            const StepResult sr = env_step(env, best);
            ret += sr.reward;
            if (sr.terminal || sr.truncated) break;
        }
        returns.push_back(ret);
    }
    return returns;
}

}  // namespace mcsfqf
