#include "mcsfqf/network.hpp"

#include <algorithm>
#include <cmath>

#include "mcsfqf/rng.hpp"

namespace mcsfqf {

std::vector<ConvShape> EncoderSpec::conv_layers() const {
    ConvShape l1{in_channels, in_h, in_w, 8, 4, 32};
    ConvShape l2{l1.out_c, l1.out_h(), l1.out_w(), 4, 2, 64};
    ConvShape l3{l2.out_c, l2.out_h(), l2.out_w(), 3, 1, 64};
    return {l1, l2, l3};
}

int EncoderSpec::embed_dim() const {
    if (kind == Kind::Dense) return embed;
    return conv_layers().back().out_size();
}

int EncoderSpec::obs_size() const {
    return kind == Kind::Dense ? obs_dim : in_channels * in_h * in_w;
}

void EncoderSpec::validate() const {
    if (kind == Kind::Dense) {
        require(obs_dim >= 1 && hidden >= 1 && embed >= 1, "EncoderSpec: bad dense dims");
    } else {
        require(in_channels >= 1 && in_h >= 1 && in_w >= 1, "EncoderSpec: bad conv input");
        for (const auto& l : conv_layers())
            require(l.out_h() >= 1 && l.out_w() >= 1,
                    "EncoderSpec: conv input too small for the fixed layer geometry");
    }
}

void NetConfig::validate() const {
    encoder.validate();
    neuron.validate();
    require(n_fractions >= 1, "NetConfig: need at least one fraction");
    require(pop_m >= 2, "NetConfig: population must have at least 2 neurons");
    require(pop_sigma > 0.0, "NetConfig: receptive width must be positive");
    require(n_mcn >= 1 && n_hidden >= 1 && n_actions >= 1 && T >= 1, "NetConfig: bad sizes");
}

NetworkParams NetworkParams::zeros(const NetConfig& cfg) {
    NetworkParams w;
    const int embed = cfg.encoder.embed_dim();
    if (cfg.encoder.kind == EncoderSpec::Kind::Dense) {
        w.enc_w1 = Mat(cfg.encoder.obs_dim, cfg.encoder.hidden);
        w.enc_w2 = Mat(cfg.encoder.hidden, cfg.encoder.embed);
    } else {
        for (const auto& l : cfg.encoder.conv_layers())
            w.conv.emplace_back(l.weight_rows(), l.weight_cols());
    }
    w.w_f = Mat(cfg.n_fractions, embed);
    w.w_b = Mat(embed, cfg.fuse_width());
    w.w_a = Mat(cfg.pop_m, cfg.fuse_width());
    w.w_h = Mat(cfg.fuse_width(), cfg.n_hidden);
    w.w_l = Mat(cfg.n_hidden, cfg.n_actions);
    return w;
}

NetworkParams NetworkParams::init(const NetConfig& cfg, std::uint64_t seed) {
    NetworkParams w = zeros(cfg);
    // Uniform init; bounds tuned so random networks spike under the default
    // neuron constants. The fraction head starts at zero: uniform fractions.
    auto fill = [&](Mat& m, double bound, std::uint64_t id) {
        for (std::size_t i = 0; i < m.a.size(); ++i)
            m.a[i] = bound * usym(seed ^ rng_tag::kInit, id, i, 0);
    };
    std::uint64_t id = 1;
    if (cfg.encoder.kind == EncoderSpec::Kind::Dense) {
        fill(w.enc_w1, 1.0, id++);
        fill(w.enc_w2, 3.0 * std::sqrt(3.0 / cfg.encoder.hidden), id++);
    } else {
        const auto layers = cfg.encoder.conv_layers();
        for (std::size_t l = 0; l < layers.size(); ++l)
            fill(w.conv[l], 2.0 * std::sqrt(3.0 / layers[l].weight_cols()), id++);
    }
    id = 16;
    fill(w.w_b, 3.0 * std::sqrt(3.0 / w.w_b.rows), id++);
    fill(w.w_a, 3.0 * std::sqrt(3.0 / w.w_a.rows), id++);
    fill(w.w_h, 3.0 * std::sqrt(3.0 / w.w_h.rows), id++);
    fill(w.w_l, 0.5 * std::sqrt(3.0 / w.w_l.rows), id++);
    return w;
}

void NetworkParams::visit(const std::function<void(const std::string&, Mat&)>& fn) {
    if (!enc_w1.empty()) fn("enc_w1", enc_w1);
    if (!enc_w2.empty()) fn("enc_w2", enc_w2);
    for (std::size_t i = 0; i < conv.size(); ++i) fn("conv" + std::to_string(i), conv[i]);
    fn("w_f", w_f);
    fn("w_b", w_b);
    fn("w_a", w_a);
    fn("w_h", w_h);
    fn("w_l", w_l);
}

void NetworkParams::visit(const std::function<void(const std::string&, const Mat&)>& fn) const {
    const_cast<NetworkParams*>(this)->visit(
        [&](const std::string& name, Mat& m) { fn(name, m); });
}

double FractionSet::entropy() const {
    double h = 0.0;
    for (double pk : p)
        if (pk > 0.0) h -= pk * std::log(pk);
    return h;
}

void FractionSet::validate(double boundary_tol, double sum_tol) const {
    const int N = n();
    require(N >= 1 && static_cast<int>(tau.size()) == N + 1 &&
                static_cast<int>(tau_hat.size()) == N,
            "FractionSet: inconsistent sizes");
    require(std::abs(tau.front()) <= boundary_tol, "FractionSet: tau_0 != 0");
    require(std::abs(tau.back() - 1.0) <= boundary_tol, "FractionSet: tau_N != 1");
    double sum = 0.0;
    for (int k = 0; k < N; ++k) {
        require(p[k] > 0.0, "FractionSet: probabilities must be positive");
        sum += p[k];
        require(tau[k + 1] > tau[k], "FractionSet: tau must be strictly increasing");
        require(std::abs(tau_hat[k] - 0.5 * (tau[k] + tau[k + 1])) <= 1e-12,
                "FractionSet: tau_hat is not the midpoint");
    }
    require(std::abs(sum - 1.0) <= sum_tol, "FractionSet: probabilities do not sum to 1");
}

FractionSet fractions_from_logits(const Vec& phi) {
    const int N = static_cast<int>(phi.size());
    require(N >= 1, "fractions_from_logits: empty logits");
    FractionSet f;
    f.p.resize(N);
    f.tau.resize(N + 1);
    f.tau_hat.resize(N);
    const double mx = *std::max_element(phi.begin(), phi.end());
    double z = 0.0;
    for (int k = 0; k < N; ++k) {
        f.p[k] = std::exp(phi[k] - mx);
        z += f.p[k];
    }
    for (int k = 0; k < N; ++k) f.p[k] /= z;
    f.tau[0] = 0.0;
    for (int k = 0; k < N - 1; ++k) f.tau[k + 1] = f.tau[k] + f.p[k];
    f.tau[N] = 1.0;
    for (int k = 0; k < N; ++k) f.tau_hat[k] = 0.5 * (f.tau[k] + f.tau[k + 1]);
    return f;
}

FractionSet propose_fractions(const Mat& o_s, const Mat& w_f) {
    require(o_s.cols == w_f.cols, "propose_fractions: embedding width mismatch");
    const std::size_t T = o_s.rows;
    Vec mean(o_s.cols, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < o_s.cols; ++j) mean[j] += o_s(t, j);
    for (double& v : mean) v /= static_cast<double>(T);
    Vec phi(w_f.rows, 0.0);
    for (std::size_t i = 0; i < w_f.rows; ++i) {
        const double* row = w_f.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < w_f.cols; ++j) acc += row[j] * mean[j];
        phi[i] = acc;
    }
    return fractions_from_logits(phi);
}

Vec q_values(const FractionSet& fr, const Mat& values) {
    require(values.rows == static_cast<std::size_t>(fr.n()), "q_values: fraction count mismatch");
    Vec q(values.cols, 0.0);
    for (int i = 0; i < fr.n(); ++i) {
        const double wgt = fr.tau[i + 1] - fr.tau[i];
        const double* row = values.row(i);
        for (std::size_t a = 0; a < values.cols; ++a) q[a] += wgt * row[a];
    }
    return q;
}

// ---------------------------------------------------------------------------
// layer steppers

static void advance_lif_layer(Vec& u, const double* x, const NeuronParams& p, SpikeMode mode,
                              SurrogateCenter center, double* u_pre, double* out) {
    const double keep = 1.0 - 1.0 / p.tau_L;
    const double gain = 1.0 / p.tau_L;
    if (mode == SpikeMode::Hard) {
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double v = keep * u[i] + gain * x[i];
            u_pre[i] = v;
            if (v > p.v_th) {
                out[i] = 1.0;
                u[i] = p.v_reset;
            } else {
                out[i] = 0.0;
                u[i] = v;
            }
        }
    } else {
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double v = keep * u[i] + gain * x[i];
            u_pre[i] = v;
            out[i] = smooth_spike(v, p, center);
            u[i] = v;
        }
    }
}

static void advance_li_layer(Vec& u, const double* x, const NeuronParams& p) {
    const double keep = 1.0 - 1.0 / p.tau_L;
    const double gain = 1.0 / p.tau_L;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = keep * u[i] + gain * x[i];
}

static void advance_dendrite(Vec& v, const double* x, double tau) {
    const double keep = 1.0 - 1.0 / tau;
    const double gain = 1.0 / tau;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = keep * v[i] + gain * x[i];
}

static void advance_soma(Vec& u, const double* v_b, const double* v_a, const NeuronParams& p,
                         SpikeMode mode, SurrogateCenter center, double* u_pre, double* out) {
    const double m = p.soma_leak();
    const double cb = p.basal_coupling();
    const double ca = p.apical_coupling();
    if (mode == SpikeMode::Hard) {
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double v = m * u[i] + cb * v_b[i] + ca * v_a[i];
            u_pre[i] = v;
            if (v > p.v_th) {
                out[i] = 1.0;
                u[i] = p.v_reset;
            } else {
                out[i] = 0.0;
                u[i] = v;
            }
        }
    } else {
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double v = m * u[i] + cb * v_b[i] + ca * v_a[i];
            u_pre[i] = v;
            out[i] = smooth_spike(v, p, center);
            u[i] = v;
        }
    }
}

// ---------------------------------------------------------------------------
// convolution

void conv_forward(const ConvShape& s, const Mat& w, const double* in, double* out) {
    const int oh = s.out_h(), ow = s.out_w();
    for (int oc = 0; oc < s.out_c; ++oc) {
        const double* wr = w.row(oc);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int ic = 0; ic < s.in_c; ++ic) {
                    const double* plane = in + ic * s.in_h * s.in_w;
                    const double* wk = wr + ic * s.k * s.k;
                    for (int ky = 0; ky < s.k; ++ky) {
                        const double* rowp = plane + (oy * s.stride + ky) * s.in_w + ox * s.stride;
                        for (int kx = 0; kx < s.k; ++kx) acc += wk[ky * s.k + kx] * rowp[kx];
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

void conv_backward_weights(const ConvShape& s, const double* in, const double* gout, Mat& dw) {
    const int oh = s.out_h(), ow = s.out_w();
    for (int oc = 0; oc < s.out_c; ++oc) {
        double* dwr = dw.row(oc);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double g = gout[(oc * oh + oy) * ow + ox];
                if (g == 0.0) continue;
                for (int ic = 0; ic < s.in_c; ++ic) {
                    const double* plane = in + ic * s.in_h * s.in_w;
                    double* dwk = dwr + ic * s.k * s.k;
                    for (int ky = 0; ky < s.k; ++ky) {
                        const double* rowp = plane + (oy * s.stride + ky) * s.in_w + ox * s.stride;
                        for (int kx = 0; kx < s.k; ++kx) dwk[ky * s.k + kx] += g * rowp[kx];
                    }
                }
            }
        }
    }
}

void conv_backward_input(const ConvShape& s, const Mat& w, const double* gout, double* gin) {
    const int oh = s.out_h(), ow = s.out_w();
    for (int oc = 0; oc < s.out_c; ++oc) {
        const double* wr = w.row(oc);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double g = gout[(oc * oh + oy) * ow + ox];
                if (g == 0.0) continue;
                for (int ic = 0; ic < s.in_c; ++ic) {
                    double* plane = gin + ic * s.in_h * s.in_w;
                    const double* wk = wr + ic * s.k * s.k;
                    for (int ky = 0; ky < s.k; ++ky) {
                        double* rowp = plane + (oy * s.stride + ky) * s.in_w + ox * s.stride;
                        for (int kx = 0; kx < s.k; ++kx) rowp[kx] += g * wk[ky * s.k + kx];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// encoder

void run_encoder(const Vec& obs, const NetworkParams& w, const NetConfig& cfg,
                 std::vector<LayerTape>& tapes) {
    const auto& spec = cfg.encoder;
    require(static_cast<int>(obs.size()) == spec.obs_size(),
            "encode_state: observation size mismatch, expected " +
                std::to_string(spec.obs_size()) + " got " + std::to_string(obs.size()));
    const int T = cfg.T;
    Vec scaled(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) scaled[i] = obs[i] * cfg.input_gain;

    if (spec.kind == EncoderSpec::Kind::Dense) {
        tapes.assign(2, {});
        tapes[0] = {Mat(T, spec.hidden), Mat(T, spec.hidden)};
        tapes[1] = {Mat(T, spec.embed), Mat(T, spec.embed)};
        Vec cur1(spec.hidden, 0.0);
        add_matvec_t(w.enc_w1, scaled.data(), cur1.data());
        Vec u1(spec.hidden, 0.0), u2(spec.embed, 0.0), cur2(spec.embed);
        for (int t = 0; t < T; ++t) {
            advance_lif_layer(u1, cur1.data(), cfg.neuron, cfg.spike_mode, cfg.surrogate_center,
                              tapes[0].u_pre.row(t), tapes[0].out.row(t));
            std::fill(cur2.begin(), cur2.end(), 0.0);
            add_matvec_t(w.enc_w2, tapes[0].out.row(t), cur2.data());
            advance_lif_layer(u2, cur2.data(), cfg.neuron, cfg.spike_mode, cfg.surrogate_center,
                              tapes[1].u_pre.row(t), tapes[1].out.row(t));
        }
        return;
    }

    const auto layers = spec.conv_layers();
    tapes.assign(layers.size(), {});
    std::vector<Vec> state(layers.size());
    std::vector<Vec> cur(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const int n = layers[l].out_size();
        tapes[l] = {Mat(T, n), Mat(T, n)};
        state[l].assign(n, 0.0);
        cur[l].assign(n, 0.0);
    }
    conv_forward(layers[0], w.conv[0], scaled.data(), cur[0].data());
    for (int t = 0; t < T; ++t) {
        advance_lif_layer(state[0], cur[0].data(), cfg.neuron, cfg.spike_mode,
                          cfg.surrogate_center, tapes[0].u_pre.row(t), tapes[0].out.row(t));
        for (std::size_t l = 1; l < layers.size(); ++l) {
            conv_forward(layers[l], w.conv[l], tapes[l - 1].out.row(t), cur[l].data());
            advance_lif_layer(state[l], cur[l].data(), cfg.neuron, cfg.spike_mode,
                              cfg.surrogate_center, tapes[l].u_pre.row(t), tapes[l].out.row(t));
        }
    }
}

SpikeTrain encode_state(const Vec& obs, const NetworkParams& w, const NetConfig& cfg) {
    std::vector<LayerTape> tapes;
    run_encoder(obs, w, cfg, tapes);
    const Mat& out = tapes.back().out;
    SpikeTrain train(out.rows, out.cols);
    train.data = out.a;
    return train;
}

// ---------------------------------------------------------------------------
// fusion paths

SpikeTrain mcn_fuse(const SpikeTrain& o_s, const SpikeTrain& s_tau, const Mat& w_b,
                    const Mat& w_a, const NeuronParams& p) {
    require(o_s.neurons == w_b.rows, "mcn_fuse: basal input width mismatch");
    require(s_tau.neurons == w_a.rows, "mcn_fuse: apical input width mismatch");
    require(w_b.cols == w_a.cols, "mcn_fuse: dendrite widths disagree");
    require(o_s.steps == s_tau.steps, "mcn_fuse: window length mismatch");
    const std::size_t T = o_s.steps, n = w_b.cols;
    SpikeTrain out(T, n);
    Vec v_b(n, 0.0), v_a(n, 0.0), u(n, 0.0), x(n), u_pre(n);
    for (std::size_t t = 0; t < T; ++t) {
        std::fill(x.begin(), x.end(), 0.0);
        add_matvec_t(w_b, o_s.step(t), x.data());
        advance_dendrite(v_b, x.data(), p.tau_B);
        std::fill(x.begin(), x.end(), 0.0);
        add_matvec_t(w_a, s_tau.step(t), x.data());
        advance_dendrite(v_a, x.data(), p.tau_A);
        advance_soma(u, v_b.data(), v_a.data(), p, SpikeMode::Hard, SurrogateCenter::Threshold,
                     u_pre.data(), out.step(t));
    }
    return out;
}

Mat li_product_fuse(const SpikeTrain& o_s, const SpikeTrain& s_tau, const Mat& w_b,
                    const Mat& w_a, const NeuronParams& p) {
    require(o_s.neurons == w_b.rows, "li_product_fuse: basal input width mismatch");
    require(s_tau.neurons == w_a.rows, "li_product_fuse: apical input width mismatch");
    require(w_b.cols == w_a.cols, "li_product_fuse: group widths disagree");
    require(o_s.steps == s_tau.steps, "li_product_fuse: window length mismatch");
    const std::size_t T = o_s.steps, n = w_b.cols;
    Mat fused(T, n);
    Vec u_b(n, 0.0), u_a(n, 0.0), x(n);
    for (std::size_t t = 0; t < T; ++t) {
        std::fill(x.begin(), x.end(), 0.0);
        add_matvec_t(w_b, o_s.step(t), x.data());
        advance_li_layer(u_b, x.data(), p);
        std::fill(x.begin(), x.end(), 0.0);
        add_matvec_t(w_a, s_tau.step(t), x.data());
        advance_li_layer(u_a, x.data(), p);
        for (std::size_t i = 0; i < n; ++i) fused(t, i) = u_b[i] * u_a[i];
    }
    return fused;
}

Vec quantile_head(const SpikeTrain& s_m, const Mat& w_h, const Mat& w_l, const NeuronParams& p) {
    require(s_m.neurons == w_h.rows, "quantile_head: input width mismatch");
    const std::size_t T = s_m.steps, nh = w_h.cols;
    Vec u(nh, 0.0), x(nh), u_pre(nh), out(nh);
    Vec values(w_l.cols, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        std::fill(x.begin(), x.end(), 0.0);
        add_matvec_t(w_h, s_m.step(t), x.data());
        advance_lif_layer(u, x.data(), p, SpikeMode::Hard, SurrogateCenter::Threshold,
                          u_pre.data(), out.data());
        add_matvec_t(w_l, out.data(), values.data());
    }
    for (double& v : values) v /= static_cast<double>(T);
    return values;
}

// ---------------------------------------------------------------------------
// full model

namespace {

struct FractionWork {
    const NetworkParams& w;
    const NetConfig& cfg;
    const PopulationCodec& codec;

    // Runs the embedding + fusion + head pipeline for one fraction value,
    // reusing the shared basal trace. Fills the tape if given.
    Vec run(double tau, std::uint64_t tau_index, const Mat& v_b_shared, FractionTape* tape) const {
        const int T = cfg.T;
        const std::size_t n = cfg.fuse_width();

        // fraction embedding
        Mat stage_out(T, cfg.pop_m);
        Mat stage_pre;
        SpikeTrain pop;
        if (cfg.fusion == FusionMode::LiCosine) {
            const Vec emb = cosine_embedding(tau, cfg.pop_m);
            for (int t = 0; t < T; ++t)
                std::copy(emb.begin(), emb.end(), stage_out.row(t));
        } else {
            pop = encode_population_spikes(codec, tau, tau_index, T);
            stage_pre = Mat(T, cfg.pop_m);
            Vec u(cfg.pop_m, 0.0), x(cfg.pop_m);
            for (int t = 0; t < T; ++t) {
                const double* sp = pop.step(t);
                for (int j = 0; j < cfg.pop_m; ++j) x[j] = sp[j] * cfg.pop_lif_gain;
                advance_lif_layer(u, x.data(), cfg.neuron, cfg.spike_mode, cfg.surrogate_center,
                                  stage_pre.row(t), stage_out.row(t));
            }
        }

        // fusion
        Mat v_a(T, n), fuse_out(T, n), soma_pre;
        Vec x(n);
        if (cfg.fusion == FusionMode::McnPopulation) {
            soma_pre = Mat(T, n);
            Vec va_state(n, 0.0), u_state(n, 0.0);
            for (int t = 0; t < T; ++t) {
                std::fill(x.begin(), x.end(), 0.0);
                add_matvec_t(w.w_a, stage_out.row(t), x.data());
                advance_dendrite(va_state, x.data(), cfg.neuron.tau_A);
                std::copy(va_state.begin(), va_state.end(), v_a.row(t));
                advance_soma(u_state, v_b_shared.row(t), v_a.row(t), cfg.neuron, cfg.spike_mode,
                             cfg.surrogate_center, soma_pre.row(t), fuse_out.row(t));
            }
        } else {
            Vec ua_state(n, 0.0);
            for (int t = 0; t < T; ++t) {
                std::fill(x.begin(), x.end(), 0.0);
                add_matvec_t(w.w_a, stage_out.row(t), x.data());
                advance_li_layer(ua_state, x.data(), cfg.neuron);
                std::copy(ua_state.begin(), ua_state.end(), v_a.row(t));
                const double* vb = v_b_shared.row(t);
                double* f = fuse_out.row(t);
                for (std::size_t i = 0; i < n; ++i) f[i] = vb[i] * ua_state[i];
            }
        }

        // quantile head
        Mat hid_pre(T, cfg.n_hidden), hid_out(T, cfg.n_hidden);
        Vec hu(cfg.n_hidden, 0.0), hx(cfg.n_hidden);
        Vec values(cfg.n_actions, 0.0);
        for (int t = 0; t < T; ++t) {
            std::fill(hx.begin(), hx.end(), 0.0);
            add_matvec_t(w.w_h, fuse_out.row(t), hx.data());
            advance_lif_layer(hu, hx.data(), cfg.neuron, cfg.spike_mode, cfg.surrogate_center,
                              hid_pre.row(t), hid_out.row(t));
            add_matvec_t(w.w_l, hid_out.row(t), values.data());
        }
        for (double& v : values) v /= static_cast<double>(T);

        if (tape) {
            tape->pop = std::move(pop);
            tape->stage = {std::move(stage_pre), std::move(stage_out)};
            tape->v_a = std::move(v_a);
            if (cfg.fusion == FusionMode::McnPopulation) {
                tape->soma = {std::move(soma_pre), std::move(fuse_out)};
            } else {
                tape->fused = std::move(fuse_out);
            }
            tape->hidden = {std::move(hid_pre), std::move(hid_out)};
        }
        return values;
    }
};

}  // namespace

// Shared basal work: current per step plus the basal dendrite / LI-group
// trace driven by the encoder spikes.
static void basal_trace(const Mat& o_s, const NetworkParams& w, const NetConfig& cfg, Mat& x_b,
                        Mat& v_b) {
    const int T = cfg.T;
    const std::size_t n = cfg.fuse_width();
    x_b = Mat(T, n);
    v_b = Mat(T, n);
    Vec state(n, 0.0);
    for (int t = 0; t < T; ++t) {
        add_matvec_t(w.w_b, o_s.row(t), x_b.row(t));
        if (cfg.fusion == FusionMode::McnPopulation) {
            advance_dendrite(state, x_b.row(t), cfg.neuron.tau_B);
        } else {
            advance_li_layer(state, x_b.row(t), cfg.neuron);
        }
        std::copy(state.begin(), state.end(), v_b.row(t));
    }
}

static TapeRecord forward_impl(const Vec& obs, const NetworkParams& w, const NetConfig& cfg,
                               const FractionSet* fixed) {
    cfg.validate();
    TapeRecord tape;
    tape.obs = obs;
    run_encoder(obs, w, cfg, tape.enc);
    const Mat& o_s = tape.enc.back().out;
    tape.fractions = fixed ? *fixed : propose_fractions(o_s, w.w_f);
    basal_trace(o_s, w, cfg, tape.x_b, tape.v_b);

    const PopulationCodec codec = PopulationCodec::make(cfg.pop_m, cfg.pop_sigma, cfg.pop_seed);
    FractionWork work{w, cfg, codec};
    const int N = cfg.n_fractions;
    require(tape.fractions.n() == N, "full_forward: fraction count mismatch");
    tape.frac.resize(N);
    tape.estimate.values = Mat(N, cfg.n_actions);
    for (int i = 0; i < N; ++i) {
        Vec v = work.run(tape.fractions.tau_hat[i], static_cast<std::uint64_t>(i), tape.v_b,
                         &tape.frac[i]);
        std::copy(v.begin(), v.end(), tape.estimate.values.row(i));
    }
    tape.estimate.q = q_values(tape.fractions, tape.estimate.values);
    return tape;
}

TapeRecord full_forward(const Vec& obs, const NetworkParams& w, const NetConfig& cfg) {
    return forward_impl(obs, w, cfg, nullptr);
}

TapeRecord full_forward_fixed_fractions(const Vec& obs, const NetworkParams& w,
                                        const NetConfig& cfg, const FractionSet& fr) {
    return forward_impl(obs, w, cfg, &fr);
}

Mat quantiles_at(const TapeRecord& tape, const NetworkParams& w, const NetConfig& cfg,
                 const Vec& taus, std::uint64_t tau_index_base) {
    const PopulationCodec codec = PopulationCodec::make(cfg.pop_m, cfg.pop_sigma, cfg.pop_seed);
    FractionWork work{w, cfg, codec};
    Mat out(taus.size(), cfg.n_actions);
    for (std::size_t j = 0; j < taus.size(); ++j) {
        Vec v = work.run(taus[j], tau_index_base + j, tape.v_b, nullptr);
        std::copy(v.begin(), v.end(), out.row(j));
    }
    return out;
}

TapeRecord replay_forward(const TapeRecord& tape, const NetworkParams& w, const NetConfig& cfg) {
    return full_forward(tape.obs, w, cfg);
}

}  // namespace mcsfqf
