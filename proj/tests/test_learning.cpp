#include <doctest.h>

#include <cmath>

#include "mcsfqf/gradcheck.hpp"
#include "mcsfqf/learning.hpp"
#include "mcsfqf/rng.hpp"

using namespace mcsfqf;

TEST_CASE("huber quantile loss worked examples") {
    SUBCASE("zero error contributes nothing") {
        Mat d(1, 1);
        d(0, 0) = 0.0;
        CHECK(huber_quantile_loss({0.5}, d, 1.0) == 0.0);
    }
    SUBCASE("linear branch, positive error") {
        Mat d(1, 1);
        d(0, 0) = 2.0;
        CHECK(huber_quantile_loss({0.5}, d, 1.0) == doctest::Approx(0.75));
    }
    SUBCASE("quadratic branch, negative error") {
        Mat d(1, 1);
        d(0, 0) = -0.5;
        CHECK(huber_quantile_loss({0.5}, d, 1.0) == doctest::Approx(0.0625));
    }
}

TEST_CASE("huber quantile loss is non-negative, zero iff all deltas are zero") {
    Vec tau{0.2, 0.5, 0.9};
    Mat d(2, 3);
    CHECK(huber_quantile_loss(tau, d, 1.0) == 0.0);
    for (int trial = 0; trial < 100; ++trial) {
        bool any = false;
        for (std::size_t i = 0; i < d.a.size(); ++i) {
            d.a[i] = 4.0 * usym(9, trial, i, 0);
            any = any || d.a[i] != 0.0;
        }
        const double l = huber_quantile_loss(tau, d, 1.0);
        CHECK(l >= 0.0);
        if (any) CHECK(l > 0.0);
    }
}

TEST_CASE("huber kernel is C1 at the threshold") {
    const double eps = 1.3;
    const double lo = huber_kernel(eps - 1e-12, eps);
    const double hi = huber_kernel(eps + 1e-12, eps);
    CHECK(lo == doctest::Approx(hi).epsilon(1e-9));
    CHECK(huber_kernel(eps, eps) == doctest::Approx(0.5 * eps * eps));
    CHECK(huber_kernel_grad(eps - 1e-12, eps) == doctest::Approx(huber_kernel_grad(eps + 1e-12, eps)));
    // derivative matches finite differences on both branches
    for (double d : {-3.0, -0.4, 0.2, 2.5}) {
        const double h = 1e-6;
        const double fd = (huber_kernel(d + h, eps) - huber_kernel(d - h, eps)) / (2 * h);
        CHECK(fd == doctest::Approx(huber_kernel_grad(d, eps)).epsilon(1e-6));
    }
}

TEST_CASE("td errors") {
    SUBCASE("identical distributions, gamma 1, zero reward: zero diagonal") {
        Vec q{0.5, 1.0, 2.0};
        const Mat d = td_errors(0.0, q, q, 1.0);
        for (int i = 0; i < 3; ++i) CHECK(d(i, i) == 0.0);
        // the delta matrix is antisymmetric in this self-consistent case
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(d(i, j) == doctest::Approx(-d(j, i)));
    }
    SUBCASE("unit reward with zero quantiles") {
        Vec z(4, 0.0);
        const Mat d = td_errors(1.0, z, z, 0.99);
        for (double v : d.a) CHECK(v == 1.0);
    }
    SUBCASE("worked arithmetic") {
        const Mat d = td_errors(1.0, {2.0}, {0.5}, 0.99);
        CHECK(d(0, 0) == doctest::Approx(2.48));
    }
    SUBCASE("terminal drops the bootstrap") {
        const Mat d = td_errors(1.0, {2.0}, {0.5}, 0.99, true);
        CHECK(d(0, 0) == doctest::Approx(0.5));
    }
}

TEST_CASE("self-consistent huber gradient sums to zero over shared quantiles") {
    // loss depends only on pairwise differences, so a common shift of both
    // sides leaves it unchanged and the total gradient must vanish
    Vec q{0.2, 0.9, 1.4, 3.0};
    FractionSet fr = fractions_from_logits(Vec(4, 0.0));
    const Mat d = td_errors(0.0, q, q, 1.0);
    const Vec g_cur = huber_quantile_loss_grad(fr.tau_hat, d, 1.0);
    // gradient w.r.t. the target side, by symmetry of the delta matrix
    Vec g_tgt(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const double delta = d(i, j);
            const double w = delta > 0.0 ? fr.tau_hat[j] : 1.0 - fr.tau_hat[j];
            g_tgt[i] += w * huber_kernel_grad(delta, 1.0) / 4.0;
        }
    double total = 0.0;
    for (std::size_t k = 0; k < 4; ++k) total += g_cur[k] + g_tgt[k];
    CHECK(total == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("wasserstein fraction gradient examples") {
    SUBCASE("constant quantile function has zero gradient") {
        FractionSet fr = fractions_from_logits(Vec(4, 0.0));
        const Vec g = wasserstein_grad_tau(fr, Vec(3, 2.0), Vec(4, 2.0));
        for (double v : g) CHECK(v == 0.0);
    }
    SUBCASE("identity quantile function with uniform fractions is stationary") {
        FractionSet fr = fractions_from_logits(Vec(8, 0.0));
        Vec f_int(7), f_hat(8);
        for (int i = 1; i < 8; ++i) f_int[i - 1] = fr.tau[i];
        for (int i = 0; i < 8; ++i) f_hat[i] = fr.tau_hat[i];
        const Vec g = wasserstein_grad_tau(fr, f_int, f_hat);
        for (double v : g) CHECK(v == doctest::Approx(0.0));
    }
    SUBCASE("quadratic quantile function, worked value") {
        FractionSet fr = fractions_from_logits(Vec(2, 0.0));  // tau = 0, 0.5, 1
        Vec f_int{0.25};          // F(0.5) = 0.25
        Vec f_hat{0.0625, 0.5625};  // F(0.25), F(0.75)
        const Vec g = wasserstein_grad_tau(fr, f_int, f_hat);
        CHECK(g[0] == doctest::Approx(-0.125));
    }
}

TEST_CASE("fraction weight gradient: printed Delta coefficients") {
    FractionSet fr = fractions_from_logits(Vec(2, 0.0));  // p = (0.5, 0.5)
    // Delta_{0,0} = -p0 p0 + (N - 0 + 1) p0 (1 - p0) = -0.25 + 3 * 0.25 = 0.5
    Mat o_s(1, 1);
    o_s(0, 0) = 1.0;
    const Mat dw = fraction_weight_grad(fr, {1.0}, o_s, FractionGradMode::Paper);
    // row 0: sum over n=1 of wl * sum_{k<1} Delta_{0,k} = 1.0 * 0.5
    CHECK(dw(0, 0) == doctest::Approx(0.5));
    // row 1: Delta_{1,0} = -0.25 + 2 * 0.25 = 0.25
    CHECK(dw(1, 0) == doctest::Approx(0.25));

    SUBCASE("zero wasserstein gradient gives zero weight gradient") {
        const Mat z = fraction_weight_grad(fr, {0.0}, o_s, FractionGradMode::Paper);
        for (double v : z.a) CHECK(v == 0.0);
    }
}

TEST_CASE("optimizers") {
    NetConfig cfg;
    cfg.encoder.obs_dim = 3;
    cfg.encoder.hidden = 4;
    cfg.encoder.embed = 4;
    cfg.n_fractions = 2;
    cfg.pop_m = 4;
    cfg.n_mcn = 4;
    cfg.n_hidden = 4;
    cfg.n_actions = 2;

    SUBCASE("adam leaves parameters unchanged under zero gradients") {
        NetworkParams p = NetworkParams::init(cfg, 1);
        const NetworkParams before = p;
        AdamState opt = AdamState::make(cfg, 1e-4);
        GradientSet g = GradientSet::zeros(cfg);
        for (int i = 0; i < 10; ++i) adam_step(opt, p, g);
        CHECK(p.w_h.a == before.w_h.a);
        CHECK(p.enc_w1.a == before.enc_w1.a);
    }
    SUBCASE("adam first step is about -lr * sign(g)") {
        NetworkParams p = NetworkParams::zeros(cfg);
        AdamState opt = AdamState::make(cfg, 1e-4);
        GradientSet g = GradientSet::zeros(cfg);
        g.t.w_h(0, 0) = 0.37;
        g.t.w_h(1, 1) = -2.2;
        adam_step(opt, p, g);
        CHECK(p.w_h(0, 0) == doctest::Approx(-1e-4).epsilon(1e-3));
        CHECK(p.w_h(1, 1) == doctest::Approx(1e-4).epsilon(1e-3));
        CHECK(opt.lr == 1e-4);
    }
    SUBCASE("adam is deterministic") {
        NetworkParams p1 = NetworkParams::init(cfg, 2), p2 = NetworkParams::init(cfg, 2);
        AdamState o1 = AdamState::make(cfg, 1e-3), o2 = AdamState::make(cfg, 1e-3);
        GradientSet g = GradientSet::zeros(cfg);
        for (std::size_t i = 0; i < g.t.w_b.a.size(); ++i) g.t.w_b.a[i] = usym(5, i, 0, 0);
        for (int i = 0; i < 5; ++i) {
            adam_step(o1, p1, g);
            adam_step(o2, p2, g);
        }
        CHECK(p1.w_b.a == p2.w_b.a);
    }
    SUBCASE("rmsprop zero gradient leaves weights unchanged") {
        Mat w(2, 2), g(2, 2);
        w(0, 0) = 1.0;
        RmspropState opt = RmspropState::make(2, 2, 2.5e-9);
        rmsprop_step(opt, w, g);
        CHECK(w(0, 0) == 1.0);
        CHECK(opt.lr == 2.5e-9);
    }
    SUBCASE("rmsprop step magnitude approaches lr under a constant gradient") {
        Mat w(1, 1), g(1, 1);
        g(0, 0) = 0.5;
        RmspropState opt = RmspropState::make(1, 1, 1e-3);
        double prev = w(0, 0);
        double step = 0.0;
        for (int i = 0; i < 3000; ++i) {
            rmsprop_step(opt, w, g);
            step = prev - w(0, 0);
            prev = w(0, 0);
        }
        CHECK(step == doctest::Approx(1e-3).epsilon(1e-3));
    }
}

TEST_CASE("stbp_backward: zero loss gradient gives zero gradients") {
    NetConfig cfg;
    cfg.encoder.obs_dim = 4;
    cfg.encoder.hidden = 6;
    cfg.encoder.embed = 5;
    cfg.n_fractions = 3;
    cfg.pop_m = 6;
    cfg.n_mcn = 5;
    cfg.n_hidden = 5;
    cfg.n_actions = 2;
    cfg.T = 4;
    const NetworkParams w = NetworkParams::init(cfg, 9);
    Vec obs(4, 0.0);
    obs[1] = 1.0;
    const TapeRecord tape = full_forward(obs, w, cfg);
    GradientSet g = GradientSet::zeros(cfg);
    stbp_backward(tape, Mat(3, 2), w, cfg, g);
    CHECK(g.max_abs() == 0.0);
}

TEST_CASE("stbp_backward: T=1 basal gradient collapses to the single-term kernel") {
    NetConfig cfg;
    cfg.encoder.obs_dim = 1;
    cfg.encoder.hidden = 1;
    cfg.encoder.embed = 1;
    cfg.n_fractions = 1;
    cfg.pop_m = 2;
    cfg.n_mcn = 1;
    cfg.n_hidden = 1;
    cfg.n_actions = 1;
    cfg.T = 1;
    cfg.spike_mode = SpikeMode::Smooth;
    NetworkParams w = NetworkParams::init(cfg, 3);

    Vec obs{1.0};
    const TapeRecord tape = full_forward(obs, w, cfg);
    Mat dvalues(1, 1);
    dvalues(0, 0) = 1.0;
    GradientSet g = GradientSet::zeros(cfg);
    stbp_backward(tape, dvalues, w, cfg, g);

    // delta at the MCN output spike: dF/dS^m via readout and hidden layer
    const NeuronParams& p = cfg.neuron;
    const double hid_pre = tape.frac[0].hidden.u_pre(0, 0);
    const double delta_o =
        w.w_l(0, 0) * surrogate_grad(hid_pre, p, cfg.surrogate_center) * (1.0 / p.tau_L) *
        w.w_h(0, 0);
    const double u1 = tape.frac[0].soma.u_pre(0, 0);
    const double o_s0 = tape.o_s()(0, 0);
    // 2 g_B delta m^0 / (g_L tau_B (4 + (pi tau_L u)^2)) * O^s_0
    const double pi = 3.14159265358979323846;
    const double uc = u1 - p.v_th;
    const double expect = 2.0 * p.g_B * delta_o /
                          (p.g_L * p.tau_B * (4.0 + pi * pi * p.tau_L * p.tau_L * uc * uc)) * o_s0;
    CHECK(g.t.w_b(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("smooth-mode gradients match central finite differences") {
    GradCheckConfig g;
    g.obs_dim = 4;
    g.enc_hidden = 10;
    g.embed = 8;
    g.n_mcn = 8;
    g.n_hidden = 8;
    g.pop_m = 8;
    g.n_fractions = 3;
    g.n_actions = 2;
    g.T = 5;
    const auto records = verify_gradients(g);
    for (const auto& r : records) {
        INFO(r.group, " rel err ", r.max_rel_err);
        if (!r.informational) CHECK(r.pass);
    }
}

TEST_CASE("smooth-mode gradients match finite differences in the LI-product mode") {
    GradCheckConfig g;
    g.obs_dim = 4;
    g.enc_hidden = 8;
    g.embed = 6;
    g.n_mcn = 6;
    g.n_hidden = 6;
    g.pop_m = 6;
    g.n_fractions = 2;
    g.n_actions = 2;
    g.T = 4;
    g.fusion = FusionMode::LiPopulation;
    const auto records = verify_gradients(g);
    for (const auto& r : records) {
        INFO(r.group, " rel err ", r.max_rel_err);
        if (!r.informational) CHECK(r.pass);
    }
}

TEST_CASE("paper-mode fraction gradient differs from the chain rule and is reported") {
    const auto records = verify_gradients(GradCheckConfig{});
    bool found_paper = false;
    for (const auto& r : records) {
        if (r.group == "w_f[paper]") {
            found_paper = true;
            CHECK(r.informational);
            CHECK(r.pass);  // informational records never fail the suite
        }
        if (r.group == "w_f[softmax-chain]") CHECK(r.max_rel_err < 1e-4);
    }
    CHECK(found_paper);
}

TEST_CASE("descent on the fraction gradient reaches uniform spacing") {
    const int n = 16;
    Vec tau(n + 1);
    tau[0] = 0.0;
    tau[n] = 1.0;
    for (int i = 1; i < n; ++i) tau[i] = u01(13, 0, i, 0);
    std::sort(tau.begin() + 1, tau.end() - 1);
    for (int it = 0; it < 10000; ++it) {
        for (int i = 1; i < n; ++i) {
            const double g = tau[i] - 0.5 * (tau[i - 1] + tau[i + 1]);
            tau[i] -= 0.4 * g;
        }
    }
    for (int i = 0; i <= n; ++i)
        CHECK(std::abs(tau[i] - static_cast<double>(i) / n) < 1e-3);
}

TEST_CASE("conv encoder gradients match finite differences on sampled weights") {
    NetConfig cfg;
    cfg.encoder.kind = EncoderSpec::Kind::Conv;
    cfg.encoder.in_channels = 1;
    cfg.encoder.in_h = 40;
    cfg.encoder.in_w = 40;
    cfg.n_fractions = 2;
    cfg.pop_m = 8;
    cfg.n_mcn = 8;
    cfg.n_hidden = 8;
    cfg.n_actions = 2;
    cfg.T = 4;
    cfg.spike_mode = SpikeMode::Smooth;
    NetworkParams w = NetworkParams::init(cfg, 13);

    Vec obs(1600, 0.0);
    for (int i = 0; i < 1600; ++i) obs[i] = u01(77, i, 0, 0) < 0.2 ? 1.0 : 0.0;

    const TapeRecord base = full_forward(obs, w, cfg);
    const FractionSet fr = base.fractions;
    // scalar probe: sum of all quantile outputs
    auto loss_at = [&](const NetworkParams& p) {
        const TapeRecord t = full_forward_fixed_fractions(obs, p, cfg, fr);
        double s = 0.0;
        for (double v : t.estimate.values.a) s += v;
        return s;
    };
    Mat dvalues(2, 2);
    dvalues.fill(1.0);
    GradientSet g = GradientSet::zeros(cfg);
    stbp_backward(base, dvalues, w, cfg, g);

    const double h = 1e-4;
    for (std::size_t layer = 0; layer < w.conv.size(); ++layer) {
        Mat& tensor = w.conv[layer];
        for (int k = 0; k < 8; ++k) {
            const std::size_t idx = hash4(91, layer, k, 0) % tensor.a.size();
            const double saved = tensor.a[idx];
            tensor.a[idx] = saved + h;
            const double lp = loss_at(w);
            tensor.a[idx] = saved - h;
            const double lm = loss_at(w);
            tensor.a[idx] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = g.t.conv[layer].a[idx];
            INFO("layer ", layer, " idx ", idx, " fd ", fd, " analytic ", an);
            CHECK(std::abs(fd - an) <= 1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(an)));
        }
    }
}
