#include <doctest.h>

#include <cmath>

#include "mcsfqf/network.hpp"
#include "mcsfqf/rng.hpp"

using namespace mcsfqf;

namespace {

NetConfig small_dense(int actions = 2) {
    NetConfig cfg;
    cfg.encoder.kind = EncoderSpec::Kind::Dense;
    cfg.encoder.obs_dim = 5;
    cfg.encoder.hidden = 16;
    cfg.encoder.embed = 12;
    cfg.n_fractions = 4;
    cfg.pop_m = 8;
    cfg.n_mcn = 10;
    cfg.n_hidden = 10;
    cfg.n_actions = actions;
    cfg.T = 8;
    return cfg;
}

}  // namespace

TEST_CASE("propose_fractions: equal logits give uniform fractions") {
    const FractionSet fr = fractions_from_logits(Vec(8, 0.0));
    fr.validate();
    for (int i = 0; i <= 8; ++i) CHECK(fr.tau[i] == doctest::Approx(i / 8.0));
}

TEST_CASE("propose_fractions: worked two-fraction example") {
    // p = (0.25, 0.75) from logits (0, ln 3)
    const FractionSet fr = fractions_from_logits({0.0, std::log(3.0)});
    CHECK(fr.p[0] == doctest::Approx(0.25));
    CHECK(fr.tau[0] == 0.0);
    CHECK(fr.tau[1] == doctest::Approx(0.25));
    CHECK(fr.tau[2] == 1.0);
    CHECK(fr.tau_hat[0] == doctest::Approx(0.125));
    CHECK(fr.tau_hat[1] == doctest::Approx(0.625));
}

TEST_CASE("fraction invariants hold over random logits") {
    for (int trial = 0; trial < 200; ++trial) {
        Vec phi(16);
        for (int i = 0; i < 16; ++i) phi[i] = 8.0 * usym(7, trial, i, 0);
        const FractionSet fr = fractions_from_logits(phi);
        CHECK_NOTHROW(fr.validate());
    }
}

TEST_CASE("q_values reductions") {
    FractionSet fr = fractions_from_logits({0.0, std::log(3.0)});  // tau = 0, .25, 1
    Mat v(2, 1);
    v(0, 0) = 2.0;
    v(1, 0) = -1.0;
    const Vec q = q_values(fr, v);
    CHECK(q[0] == doctest::Approx(0.25 * 2.0 + 0.75 * -1.0));

    SUBCASE("single fraction returns the single value") {
        FractionSet one = fractions_from_logits({0.3});
        Mat v1(1, 1);
        v1(0, 0) = 4.2;
        CHECK(q_values(one, v1)[0] == doctest::Approx(4.2));
    }
    SUBCASE("constant values reduce to the constant") {
        const FractionSet fr8 = fractions_from_logits({1.0, -2.0, 0.5, 3.0});
        Mat c(4, 2);
        c.fill(0.77);
        const Vec q8 = q_values(fr8, c);
        CHECK(q8[0] == doctest::Approx(0.77));
        CHECK(q8[1] == doctest::Approx(0.77));
    }
    SUBCASE("affine consistency: q(values + c) = q(values) + c") {
        const FractionSet fr8 = fractions_from_logits({1.0, -2.0, 0.5, 3.0});
        Mat a(4, 1);
        for (int i = 0; i < 4; ++i) a(i, 0) = std::sin(i * 1.7);
        Mat b = a;
        for (auto& x : b.a) x += 5.5;
        CHECK(q_values(fr8, b)[0] == doctest::Approx(q_values(fr8, a)[0] + 5.5));
    }
}

TEST_CASE("zero weights: zero observation gives an all-zero spike train") {
    const NetConfig cfg = small_dense();
    const NetworkParams w = NetworkParams::zeros(cfg);
    const SpikeTrain o = encode_state(Vec(5, 0.0), w, cfg);
    CHECK(o.steps == 8);
    CHECK(o.neurons == 12);
    CHECK(o.count() == 0);
}

TEST_CASE("encode_state rejects shape mismatches naming expected and actual") {
    const NetConfig cfg = small_dense();
    const NetworkParams w = NetworkParams::zeros(cfg);
    try {
        encode_state(Vec(4, 0.0), w, cfg);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected 5") != std::string::npos);
        CHECK(msg.find("got 4") != std::string::npos);
    }
}

TEST_CASE("mcn_fuse with unit weights reproduces the bare neuron trace") {
    NeuronParams p;
    p.tau_A = p.tau_B = 2.0;
    p.tau_L = 4.0;
    p.v_th = 0.8;
    const int T = 30;
    SpikeTrain ones(T, 1);
    for (int t = 0; t < T; ++t) ones.at(t, 0) = 1.0;
    Mat w_b(1, 1), w_a(1, 1);
    w_b(0, 0) = 1.5;  // currents x_b = 1.5, x_a = 1.0 as in the reference trace
    w_a(0, 0) = 1.0;
    const SpikeTrain fused = mcn_fuse(ones, ones, w_b, w_a, p);

    McnState s = McnState::zeros(1);
    Vec xb{1.5}, xa{1.0};
    for (int t = 0; t < T; ++t) {
        dendrite_step(s.v_b, xb, p.tau_B);
        dendrite_step(s.v_a, xa, p.tau_A);
        mcn_soma_step(s, p);
        CHECK(fused.at(t, 0) == static_cast<double>(s.last_spike[0]));
    }
    CHECK(fused.count() >= 1);
}

TEST_CASE("mcn_fuse one-step hand check") {
    NeuronParams p;
    p.tau_L = 4.0;
    SpikeTrain ones(1, 1);
    ones.at(0, 0) = 1.0;
    Mat w1(1, 1);
    w1(0, 0) = 1.0;
    // v_b = v_a = 0.5 after one dendrite step; u = 0.25*0.5 + 0.25*0.5 = 0.25
    McnState s = McnState::zeros(1);
    Vec x{1.0};
    dendrite_step(s.v_b, x, p.tau_B);
    dendrite_step(s.v_a, x, p.tau_A);
    CHECK(s.v_b[0] == doctest::Approx(0.5));
    mcn_soma_step(s, p);
    CHECK(s.u[0] == doctest::Approx(0.25));
}

TEST_CASE("mcn_fuse rejects mismatched shapes") {
    NeuronParams p;
    SpikeTrain a(4, 3), b(4, 2);
    Mat w_b(3, 5), w_a(2, 4);  // widths disagree
    CHECK_THROWS_AS(mcn_fuse(a, b, w_b, w_a, p), std::invalid_argument);
}

TEST_CASE("quantile_head basics") {
    NeuronParams p;
    SpikeTrain zeros_in(8, 6);
    Mat w_h(6, 5), w_l(5, 3);
    SUBCASE("zero spikes give zero values with output width = action count") {
        const Vec v = quantile_head(zeros_in, w_h, w_l, p);
        CHECK(v.size() == 3);
        for (double x : v) CHECK(x == 0.0);
    }
    SUBCASE("readout bounded by the largest column sum of |W_L|") {
        for (std::size_t i = 0; i < w_h.a.size(); ++i) w_h.a[i] = 5.0 * usym(3, i, 0, 0);
        for (std::size_t i = 0; i < w_l.a.size(); ++i) w_l.a[i] = usym(4, i, 0, 0);
        SpikeTrain busy(8, 6);
        for (auto& v : busy.data) v = 1.0;
        const Vec v = quantile_head(busy, w_h, w_l, p);
        for (std::size_t a = 0; a < 3; ++a) {
            double col = 0.0;
            for (std::size_t h = 0; h < 5; ++h) col += std::abs(w_l(h, a));
            CHECK(std::abs(v[a]) <= col + 1e-12);
        }
    }
}

TEST_CASE("li_product_fuse") {
    NeuronParams p;
    Mat w_b(2, 3), w_a(2, 3);
    SpikeTrain in_b(4, 2), in_a(4, 2);
    SUBCASE("all-zero input gives an all-zero product trace") {
        for (std::size_t i = 0; i < w_b.a.size(); ++i) w_b.a[i] = 1.0;
        const Mat fused = li_product_fuse(in_b, in_a, w_b, w_a, p);
        for (double v : fused.a) CHECK(v == 0.0);
    }
    SUBCASE("one-step product of potentials 1.0 and 0.5") {
        w_b.fill(0.0);
        w_a.fill(0.0);
        w_b(0, 0) = 2.0;  // x_b = 2 -> u_b = 1.0 after one tau_L = 2 step
        w_a(0, 0) = 1.0;  // x_a = 1 -> u_a = 0.5
        in_b.at(0, 0) = 1.0;
        in_a.at(0, 0) = 1.0;
        const Mat fused = li_product_fuse(in_b, in_a, w_b, w_a, p);
        CHECK(fused(0, 0) == doctest::Approx(0.5));
    }
}

TEST_CASE("full_forward is deterministic and satisfies the fraction contract") {
    NetConfig cfg = small_dense();
    const NetworkParams w = NetworkParams::init(cfg, 5);
    Vec obs(5, 0.0);
    obs[2] = 1.0;
    const TapeRecord a = full_forward(obs, w, cfg);
    const TapeRecord b = full_forward(obs, w, cfg);
    CHECK(a.estimate.q == b.estimate.q);
    CHECK(a.estimate.values.a == b.estimate.values.a);
    CHECK_NOTHROW(a.fractions.validate());
    CHECK(a.estimate.values.rows == 4);
    CHECK(a.estimate.values.cols == 2);
}

TEST_CASE("greedy action is invariant under positive readout rescaling") {
    NetConfig cfg = small_dense(3);
    NetworkParams w = NetworkParams::init(cfg, 11);
    Vec obs(5, 0.0);
    obs[0] = 1.0;
    const TapeRecord a = full_forward(obs, w, cfg);
    for (double& x : w.w_l.a) x *= 3.7;
    const TapeRecord b = full_forward(obs, w, cfg);
    auto argmax = [](const Vec& q) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < q.size(); ++i)
            if (q[i] > q[best]) best = i;
        return best;
    };
    CHECK(argmax(a.estimate.q) == argmax(b.estimate.q));
    for (std::size_t i = 0; i < a.estimate.q.size(); ++i)
        CHECK(b.estimate.q[i] == doctest::Approx(3.7 * a.estimate.q[i]));
}

TEST_CASE("tape replay reproduces every recorded potential bit-exactly") {
    NetConfig cfg = small_dense();
    const NetworkParams w = NetworkParams::init(cfg, 21);
    Vec obs(5, 0.0);
    obs[4] = 1.0;
    const TapeRecord a = full_forward(obs, w, cfg);
    const TapeRecord b = replay_forward(a, w, cfg);
    CHECK(a.v_b.a == b.v_b.a);
    for (std::size_t l = 0; l < a.enc.size(); ++l) {
        CHECK(a.enc[l].u_pre.a == b.enc[l].u_pre.a);
        CHECK(a.enc[l].out.a == b.enc[l].out.a);
    }
    for (int i = 0; i < cfg.n_fractions; ++i) {
        CHECK(a.frac[i].soma.u_pre.a == b.frac[i].soma.u_pre.a);
        CHECK(a.frac[i].hidden.u_pre.a == b.frac[i].hidden.u_pre.a);
        CHECK(a.frac[i].v_a.a == b.frac[i].v_a.a);
    }
}

TEST_CASE("quantiles_at agrees with the main forward at the same key") {
    NetConfig cfg = small_dense();
    const NetworkParams w = NetworkParams::init(cfg, 31);
    Vec obs(5, 0.0);
    obs[1] = 1.0;
    const TapeRecord tape = full_forward(obs, w, cfg);
    // re-evaluating the midpoints at their original indices reproduces values
    const Mat again = quantiles_at(tape, w, cfg, tape.fractions.tau_hat, 0);
    CHECK(again.a == tape.estimate.values.a);
}

TEST_CASE("ablation modes run and differ from the MCN path") {
    NetConfig cfg = small_dense();
    Vec obs(5, 0.0);
    obs[2] = 1.0;
    const NetworkParams w = NetworkParams::init(cfg, 41);
    const TapeRecord mcn = full_forward(obs, w, cfg);
    cfg.fusion = FusionMode::LiPopulation;
    const TapeRecord pop = full_forward(obs, w, cfg);
    cfg.fusion = FusionMode::LiCosine;
    const TapeRecord cos = full_forward(obs, w, cfg);
    CHECK(mcn.estimate.q != pop.estimate.q);
    CHECK(pop.estimate.q != cos.estimate.q);
    CHECK_NOTHROW(pop.fractions.validate());
    CHECK_NOTHROW(cos.fractions.validate());
}

TEST_CASE("conv encoder shapes and zero path") {
    NetConfig cfg;
    cfg.encoder.kind = EncoderSpec::Kind::Conv;
    cfg.encoder.in_channels = 1;
    cfg.encoder.in_h = 40;
    cfg.encoder.in_w = 40;
    cfg.n_fractions = 2;
    cfg.pop_m = 8;
    cfg.n_mcn = 6;
    cfg.n_hidden = 6;
    cfg.n_actions = 4;
    cfg.T = 4;
    const auto layers = cfg.encoder.conv_layers();
    CHECK(layers[0].out_h() == 9);
    CHECK(layers[1].out_h() == 3);
    CHECK(layers[2].out_h() == 1);
    CHECK(cfg.encoder.embed_dim() == 64);

    const NetworkParams w = NetworkParams::zeros(cfg);
    const SpikeTrain o = encode_state(Vec(1600, 0.5), w, cfg);
    CHECK(o.neurons == 64);
    CHECK(o.count() == 0);

    const NetworkParams wr = NetworkParams::init(cfg, 3);
    Vec img(1600, 0.0);
    for (int i = 700; i < 760; ++i) img[i] = 1.0;
    const TapeRecord tape = full_forward(img, wr, cfg);
    CHECK(tape.estimate.q.size() == 4);
    const TapeRecord tape2 = full_forward(img, wr, cfg);
    CHECK(tape.estimate.q == tape2.estimate.q);
}

TEST_CASE("conv input too small for the fixed geometry is rejected") {
    NetConfig cfg;
    cfg.encoder.kind = EncoderSpec::Kind::Conv;
    cfg.encoder.in_channels = 1;
    cfg.encoder.in_h = 20;
    cfg.encoder.in_w = 20;
    cfg.n_actions = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
