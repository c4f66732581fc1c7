#include "mcsfqf/learning.hpp"

#include <algorithm>
#include <cmath>

namespace mcsfqf {

double huber_kernel(double delta, double eps) {
    const double ad = std::abs(delta);
    if (ad <= eps) return 0.5 * delta * delta;
    return eps * (ad - 0.5 * eps);
}

double huber_kernel_grad(double delta, double eps) {
    if (std::abs(delta) <= eps) return delta;
    return delta > 0.0 ? eps : -eps;
}

Mat td_errors(double reward, const Vec& next_quantiles, const Vec& cur_quantiles, double gamma,
              bool terminal) {
    Mat d(next_quantiles.size(), cur_quantiles.size());
    for (std::size_t i = 0; i < next_quantiles.size(); ++i) {
        const double target = terminal ? reward : reward + gamma * next_quantiles[i];
        for (std::size_t j = 0; j < cur_quantiles.size(); ++j)
            d(i, j) = target - cur_quantiles[j];
    }
    return d;
}

static double quantile_weight(double tau, double delta) {
    // |tau - (1 - H(delta))| with H(delta) = 1 for delta > 0
    return delta > 0.0 ? tau : 1.0 - tau;
}

double huber_quantile_loss(const Vec& tau_hat, const Mat& deltas, double eps) {
    require(eps > 0.0, "huber_quantile_loss: epsilon must be positive");
    require(deltas.cols == tau_hat.size(), "huber_quantile_loss: tau/delta width mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < deltas.rows; ++i) {
        for (std::size_t j = 0; j < deltas.cols; ++j) {
            const double d = deltas(i, j);
            loss += quantile_weight(tau_hat[j], d) * huber_kernel(d, eps) / eps;
        }
    }
    return loss / static_cast<double>(deltas.rows);
}

Vec huber_quantile_loss_grad(const Vec& tau_hat, const Mat& deltas, double eps) {
    require(deltas.cols == tau_hat.size(), "huber_quantile_loss_grad: width mismatch");
    Vec g(deltas.cols, 0.0);
    for (std::size_t i = 0; i < deltas.rows; ++i) {
        for (std::size_t j = 0; j < deltas.cols; ++j) {
            const double d = deltas(i, j);
            g[j] -= quantile_weight(tau_hat[j], d) * huber_kernel_grad(d, eps) / eps;
        }
    }
    const double inv = 1.0 / static_cast<double>(deltas.rows);
    for (double& v : g) v *= inv;
    return g;
}

Vec wasserstein_grad_tau(const FractionSet& fr, const Vec& f_interior, const Vec& f_hat) {
    const int N = fr.n();
    require(static_cast<int>(f_interior.size()) == N - 1,
            "wasserstein_grad_tau: need F at the N-1 interior fractions");
    require(static_cast<int>(f_hat.size()) == N,
            "wasserstein_grad_tau: need F at the N midpoints");
    Vec g(std::max(N - 1, 0), 0.0);
    for (int i = 1; i < N; ++i)
        g[i - 1] = 2.0 * f_interior[i - 1] - f_hat[i] - f_hat[i - 1];
    return g;
}

Mat fraction_weight_grad(const FractionSet& fr, const Vec& wl_grads, const Mat& o_s,
                         FractionGradMode mode) {
    const int N = fr.n();
    require(static_cast<int>(wl_grads.size()) == N - 1,
            "fraction_weight_grad: gradient per interior fraction expected");
    Vec mean(o_s.cols, 0.0);
    for (std::size_t t = 0; t < o_s.rows; ++t)
        for (std::size_t j = 0; j < o_s.cols; ++j) mean[j] += o_s(t, j);
    for (double& v : mean) v /= static_cast<double>(o_s.rows);

    Mat dw(N, o_s.cols);
    for (int i = 0; i < N; ++i) {
        double c = 0.0;
        if (mode == FractionGradMode::Paper) {
            const double delta_common = (N - i + 1) * fr.p[i] * (1.0 - fr.p[i]);
            for (int n = 1; n < N; ++n) {
                double inner = 0.0;
                for (int k = 0; k < n; ++k) inner += -fr.p[k] * fr.p[i] + delta_common;
                c += wl_grads[n - 1] * inner;
            }
        } else {
            for (int n = 1; n < N; ++n)
                c += wl_grads[n - 1] * fr.p[i] * ((i < n ? 1.0 : 0.0) - fr.tau[n]);
        }
        double* row = dw.row(i);
        for (std::size_t j = 0; j < dw.cols; ++j) row[j] = c * mean[j];
    }
    return dw;
}

void GradientSet::scale(double s) {
    t.visit([s](const std::string&, Mat& m) {
        for (double& v : m.a) v *= s;
    });
}

double GradientSet::max_abs() const {
    double mx = 0.0;
    t.visit([&mx](const std::string&, const Mat& m) {
        for (double v : m.a) mx = std::max(mx, std::abs(v));
    });
    return mx;
}

bool GradientSet::finite() const {
    bool ok = true;
    t.visit([&ok](const std::string&, const Mat& m) {
        if (!all_finite(m.a.data(), m.a.size())) ok = false;
    });
    return ok;
}

// ---------------------------------------------------------------------------
// STBP backward

namespace {

struct Backward {
    const TapeRecord& tape;
    const NetworkParams& w;
    const NetConfig& cfg;
    GradientSet& out;

    int T;
    std::size_t n_fuse;
    double alpha;   // LIF leak 1 - 1/tau_L
    double kappa;   // LIF input gain 1/tau_L
    double m;       // soma self-coupling
    double cb, ca;  // dendrite-to-soma couplings
    double beta_b, beta_a, kb, ka;

    // accumulated direct error on the shared basal trace, [T x n_fuse]
    Mat d_vb_direct;
    // accumulated error on the encoder output spikes, [T x embed]
    Mat d_os;

    Backward(const TapeRecord& tp, const NetworkParams& wp, const NetConfig& c, GradientSet& o)
        : tape(tp), w(wp), cfg(c), out(o) {
        T = cfg.T;
        n_fuse = cfg.fuse_width();
        const NeuronParams& p = cfg.neuron;
        alpha = 1.0 - 1.0 / p.tau_L;
        kappa = 1.0 / p.tau_L;
        m = p.soma_leak();
        cb = p.basal_coupling();
        ca = p.apical_coupling();
        beta_b = 1.0 - 1.0 / p.tau_B;
        beta_a = 1.0 - 1.0 / p.tau_A;
        kb = 1.0 / p.tau_B;
        ka = 1.0 / p.tau_A;
        d_vb_direct = Mat(T, n_fuse);
        d_os = Mat(T, cfg.encoder.embed_dim());
    }

    double sg(double u_pre) const { return surrogate_grad(u_pre, cfg.neuron, cfg.surrogate_center); }

    // One fraction pass: readout, hidden layer, fusion; accumulates the
    // shared basal error and d_os is untouched here (basal handled jointly).
    void fraction(int i, const double* dvalues) {
        const FractionTape& f = tape.frac[i];

        // readout: F_a = (1/T) sum_t sum_h W_l(h,a) O^L_t(h)
        Vec dhid_const(cfg.n_hidden, 0.0);  // dL/dO^L_t(h), same for every t
        const double invT = 1.0 / static_cast<double>(T);
        for (std::size_t h = 0; h < w.w_l.rows; ++h) {
            const double* wr = w.w_l.row(h);
            double acc = 0.0;
            for (std::size_t a = 0; a < w.w_l.cols; ++a) acc += wr[a] * dvalues[a];
            dhid_const[h] = acc * invT;
        }
        Vec hsum(cfg.n_hidden, 0.0);
        for (int t = 0; t < T; ++t) {
            const double* o = f.hidden.out.row(t);
            for (int h = 0; h < cfg.n_hidden; ++h) hsum[h] += o[h];
        }
        for (std::size_t h = 0; h < w.w_l.rows; ++h) {
            double* dwr = out.t.w_l.row(h);
            const double s = hsum[h] * invT;
            for (std::size_t a = 0; a < w.w_l.cols; ++a) dwr[a] += s * dvalues[a];
        }

        // hidden LIF, backward through time
        Mat dfuse(T, n_fuse);
        Vec a_h(cfg.n_hidden, 0.0), dx(cfg.n_hidden);
        const Mat& fuse_out =
            cfg.fusion == FusionMode::McnPopulation ? f.soma.out : f.fused;
        for (int t = T - 1; t >= 0; --t) {
            const double* upre = f.hidden.u_pre.row(t);
            for (int h = 0; h < cfg.n_hidden; ++h)
                a_h[h] = dhid_const[h] * sg(upre[h]) + alpha * a_h[h];
            for (int h = 0; h < cfg.n_hidden; ++h) dx[h] = kappa * a_h[h];
            add_outer(out.t.w_h, fuse_out.row(t), dx.data());
            double* df = dfuse.row(t);
            std::fill(df, df + n_fuse, 0.0);
            add_matvec(w.w_h, dx.data(), df);
        }

        // fusion backward
        if (cfg.fusion == FusionMode::McnPopulation) {
            Vec a_u(n_fuse, 0.0), a_va(n_fuse, 0.0), dxa(n_fuse);
            for (int t = T - 1; t >= 0; --t) {
                const double* upre = f.soma.u_pre.row(t);
                const double* df = dfuse.row(t);
                double* dvb = d_vb_direct.row(t);
                for (std::size_t j = 0; j < n_fuse; ++j) {
                    a_u[j] = df[j] * sg(upre[j]) + m * a_u[j];
                    dvb[j] += cb * a_u[j];
                    a_va[j] = ca * a_u[j] + beta_a * a_va[j];
                    dxa[j] = ka * a_va[j];
                }
                add_outer(out.t.w_a, f.stage.out.row(t), dxa.data());
            }
        } else {
            // LI product: fused = u_b (shared) * u_a
            Vec a_ua(n_fuse, 0.0), dxa(n_fuse);
            for (int t = T - 1; t >= 0; --t) {
                const double* df = dfuse.row(t);
                const double* vb = tape.v_b.row(t);
                const double* va = f.v_a.row(t);
                double* dub = d_vb_direct.row(t);
                for (std::size_t j = 0; j < n_fuse; ++j) {
                    dub[j] += df[j] * va[j];
                    a_ua[j] = df[j] * vb[j] + alpha * a_ua[j];
                    dxa[j] = kappa * a_ua[j];
                }
                add_outer(out.t.w_a, f.stage.out.row(t), dxa.data());
            }
        }
        // Population spikes and the relay stage carry no trainable weights;
        // nothing propagates past the apical synapses.
    }

    // Basal dendrite (or LI group) shared across fractions, then the encoder.
    void shared_paths() {
        const Mat& o_s = tape.o_s();
        Vec a_vb(n_fuse, 0.0), dxb(n_fuse);
        const double leak = cfg.fusion == FusionMode::McnPopulation ? beta_b : alpha;
        const double gain = cfg.fusion == FusionMode::McnPopulation ? kb : kappa;
        for (int t = T - 1; t >= 0; --t) {
            const double* direct = d_vb_direct.row(t);
            for (std::size_t j = 0; j < n_fuse; ++j) {
                a_vb[j] = direct[j] + leak * a_vb[j];
                dxb[j] = gain * a_vb[j];
            }
            add_outer(out.t.w_b, o_s.row(t), dxb.data());
            add_matvec(w.w_b, dxb.data(), d_os.row(t));
        }
        encoder();
    }

    void encoder() {
        if (cfg.encoder.kind == EncoderSpec::Kind::Dense) {
            const int n2 = cfg.encoder.embed, n1 = cfg.encoder.hidden;
            Vec a2(n2, 0.0), dx2(n2), a1(n1, 0.0), dx1(n1), d1(n1);
            Vec scaled(tape.obs.size());
            for (std::size_t k = 0; k < tape.obs.size(); ++k)
                scaled[k] = tape.obs[k] * cfg.input_gain;
            Mat d_l1(T, n1);
            for (int t = T - 1; t >= 0; --t) {
                const double* upre2 = tape.enc[1].u_pre.row(t);
                const double* derr = d_os.row(t);
                for (int j = 0; j < n2; ++j) a2[j] = derr[j] * sg(upre2[j]) + alpha * a2[j];
                for (int j = 0; j < n2; ++j) dx2[j] = kappa * a2[j];
                add_outer(out.t.enc_w2, tape.enc[0].out.row(t), dx2.data());
                double* dl1 = d_l1.row(t);
                std::fill(dl1, dl1 + n1, 0.0);
                add_matvec(w.enc_w2, dx2.data(), dl1);
            }
            for (int t = T - 1; t >= 0; --t) {
                const double* upre1 = tape.enc[0].u_pre.row(t);
                const double* dl1 = d_l1.row(t);
                for (int j = 0; j < n1; ++j) a1[j] = dl1[j] * sg(upre1[j]) + alpha * a1[j];
                for (int j = 0; j < n1; ++j) dx1[j] = kappa * a1[j];
                add_outer(out.t.enc_w1, scaled.data(), dx1.data());
            }
            return;
        }

        const auto layers = cfg.encoder.conv_layers();
        const int L = static_cast<int>(layers.size());
        // adjoint state and per-step error per layer
        std::vector<Vec> a(L);
        std::vector<Mat> derr(L);
        for (int l = 0; l < L; ++l) {
            a[l].assign(layers[l].out_size(), 0.0);
            derr[l] = Mat(T, layers[l].out_size());
        }
        derr[L - 1] = d_os;
        Vec scaled(tape.obs.size());
        for (std::size_t k = 0; k < tape.obs.size(); ++k)
            scaled[k] = tape.obs[k] * cfg.input_gain;
        for (int l = L - 1; l >= 0; --l) {
            const int n = layers[l].out_size();
            Vec dx(n);
            std::fill(a[l].begin(), a[l].end(), 0.0);
            for (int t = T - 1; t >= 0; --t) {
                const double* upre = tape.enc[l].u_pre.row(t);
                const double* de = derr[l].row(t);
                for (int j = 0; j < n; ++j) a[l][j] = de[j] * sg(upre[j]) + alpha * a[l][j];
                for (int j = 0; j < n; ++j) dx[j] = kappa * a[l][j];
                const double* input = l == 0 ? scaled.data() : tape.enc[l - 1].out.row(t);
                conv_backward_weights(layers[l], input, dx.data(), out.t.conv[l]);
                if (l > 0) conv_backward_input(layers[l], w.conv[l], dx.data(), derr[l - 1].row(t));
            }
        }
    }
};

}  // namespace

void stbp_backward(const TapeRecord& tape, const Mat& dvalues, const NetworkParams& w,
                   const NetConfig& cfg, GradientSet& out) {
    require(dvalues.rows == static_cast<std::size_t>(cfg.n_fractions) &&
                dvalues.cols == static_cast<std::size_t>(cfg.n_actions),
            "stbp_backward: loss gradient shape mismatch");
    require(tape.frac.size() == static_cast<std::size_t>(cfg.n_fractions),
            "stbp_backward: tape does not cover all fractions");
    Backward bw(tape, w, cfg, out);
    for (int i = 0; i < cfg.n_fractions; ++i) bw.fraction(i, dvalues.row(i));
    bw.shared_paths();
}

// ---------------------------------------------------------------------------
// optimizers

AdamState AdamState::make(const NetConfig& cfg, double lr) {
    AdamState s;
    s.lr = lr;
    s.m = NetworkParams::zeros(cfg);
    s.v = NetworkParams::zeros(cfg);
    return s;
}

void adam_step(AdamState& opt, NetworkParams& params, const GradientSet& grads) {
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));

    struct Slot {
        Mat* p;
        Mat* m;
        Mat* v;
        const Mat* g;
    };
    std::vector<Slot> slots;
    params.visit([&](const std::string& name, Mat& p) {
        slots.push_back({&p, nullptr, nullptr, nullptr});
        (void)name;
    });
    std::size_t idx = 0;
    opt.m.visit([&](const std::string&, Mat& m) { slots[idx++].m = &m; });
    idx = 0;
    opt.v.visit([&](const std::string&, Mat& m) { slots[idx++].v = &m; });
    idx = 0;
    grads.t.visit([&](const std::string&, const Mat& g) { slots[idx++].g = &g; });

    for (auto& s : slots) {
        require(s.p->size() == s.g->size(), "adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < s.p->a.size(); ++i) {
            const double g = s.g->a[i];
            double& m = s.m->a[i];
            double& v = s.v->a[i];
            m = opt.beta1 * m + (1.0 - opt.beta1) * g;
            v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
            const double mh = m / bc1;
            const double vh = v / bc2;
            s.p->a[i] -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
        }
    }
}

RmspropState RmspropState::make(std::size_t rows, std::size_t cols, double lr) {
    RmspropState s;
    s.lr = lr;
    s.acc = Mat(rows, cols);
    return s;
}

void rmsprop_step(RmspropState& opt, Mat& w, const Mat& grad) {
    require(w.size() == grad.size() && w.size() == opt.acc.size(),
            "rmsprop_step: shape mismatch");
    for (std::size_t i = 0; i < w.a.size(); ++i) {
        const double g = grad.a[i];
        double& acc = opt.acc.a[i];
        acc = opt.alpha * acc + (1.0 - opt.alpha) * g * g;
        w.a[i] -= opt.lr * g / (std::sqrt(acc) + opt.eps);
    }
}

}  // namespace mcsfqf
