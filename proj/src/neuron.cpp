#include "mcsfqf/neuron.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>

namespace mcsfqf {

void NeuronParams::validate() const {
    require(tau_L >= 1.0 && tau_A >= 1.0 && tau_B >= 1.0,
            "NeuronParams: time constants must be >= 1");
    require(g_L > 0.0, "NeuronParams: g_L must be positive");
    require(g_A >= 0.0 && g_B >= 0.0, "NeuronParams: conductances must be non-negative");
    require(v_th > v_reset, "NeuronParams: v_th must exceed v_reset");
}

SomaStability classify_soma(const NeuronParams& p) {
    const double m = p.soma_leak();
    if (std::abs(m) >= 1.0) return SomaStability::Unstable;
    if (m < 0.0) return SomaStability::Oscillatory;
    return SomaStability::Stable;
}

void warn_soma_stability(const NeuronParams& p) {
    static std::atomic<bool> warned_unstable{false};
    static std::atomic<bool> warned_oscillatory{false};
    switch (classify_soma(p)) {
        case SomaStability::Unstable:
            if (!warned_unstable.exchange(true))
                std::cerr << "warning: soma recurrence |m| >= 1 (m=" << p.soma_leak()
                          << "), potentials may diverge\n";
            break;
        case SomaStability::Oscillatory:
            if (!warned_oscillatory.exchange(true))
                std::cerr << "warning: soma recurrence m < 0 (m=" << p.soma_leak()
                          << "), somatic potential oscillates\n";
            break;
        case SomaStability::Stable:
            break;
    }
}

std::size_t SpikeTrain::count() const {
    std::size_t c = 0;
    for (double v : data) c += v != 0.0;
    return c;
}

static void check_finite_input(std::span<const double> x, const char* op) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]))
            throw std::invalid_argument(std::string(op) + ": non-finite input for neuron " +
                                        std::to_string(i));
    }
}

void lif_step(LifState& s, std::span<const double> x, const NeuronParams& p) {
    check_finite_input(x, "lif_step");
    const double keep = 1.0 - 1.0 / p.tau_L;
    const double gain = 1.0 / p.tau_L;
    for (std::size_t i = 0; i < s.u.size(); ++i) {
        double u = keep * s.u[i] + gain * x[i];
        if (u > p.v_th) {
            s.last_spike[i] = 1;
            s.u[i] = p.v_reset;
        } else {
            s.last_spike[i] = 0;
            s.u[i] = u;
        }
    }
}

void li_step(Vec& u, std::span<const double> x, const NeuronParams& p) {
    check_finite_input(x, "li_step");
    const double keep = 1.0 - 1.0 / p.tau_L;
    const double gain = 1.0 / p.tau_L;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = keep * u[i] + gain * x[i];
}

void dendrite_step(Vec& v, std::span<const double> x, double tau) {
    require(tau >= 1.0, "dendrite_step: tau must be >= 1");
    check_finite_input(x, "dendrite_step");
    const double keep = 1.0 - 1.0 / tau;
    const double gain = 1.0 / tau;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = keep * v[i] + gain * x[i];
}

void mcn_soma_step(McnState& s, const NeuronParams& p) {
    warn_soma_stability(p);
    const double m = p.soma_leak();
    const double cb = p.basal_coupling();
    const double ca = p.apical_coupling();
    for (std::size_t i = 0; i < s.u.size(); ++i) {
        double u = m * s.u[i] + cb * s.v_b[i] + ca * s.v_a[i];
        if (u > p.v_th) {
            s.last_spike[i] = 1;
            s.u[i] = p.v_reset;
        } else {
            s.last_spike[i] = 0;
            s.u[i] = u;
        }
    }
}

McnTraces mcn_euler_trace(const Vec& x_b, const Vec& x_a, const NeuronParams& p, double h) {
    require(x_b.size() == x_a.size(), "mcn_euler_trace: drive traces must have equal length");
    require(h > 0.0, "mcn_euler_trace: step size must be positive");
    const std::size_t n = x_b.size();
    McnTraces tr{Vec(n, 0.0), Vec(n, 0.0), Vec(n, 0.0)};
    double vb = 0.0, va = 0.0, u = 0.0;
    const double gb = p.g_B / p.g_L;
    const double ga = p.g_A / p.g_L;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        tr.v_b[k] = vb;
        tr.v_a[k] = va;
        tr.u[k] = u;
        // simultaneous update: every state advances from its time-k value
        const double nvb = vb + (h / p.tau_B) * (-vb + x_b[k]);
        const double nva = va + (h / p.tau_A) * (-va + x_a[k]);
        const double nu = u + (h / p.tau_L) * (-u + gb * (vb - u) + ga * (va - u));
        vb = nvb;
        va = nva;
        u = nu;
    }
    if (n > 0) {
        tr.v_b[n - 1] = vb;
        tr.v_a[n - 1] = va;
        tr.u[n - 1] = u;
    }
    return tr;
}

double mcn_closed_form(const Vec& v_b_trace, const Vec& v_a_trace, const NeuronParams& p,
                       double dt, std::size_t t_index) {
    require(v_b_trace.size() == v_a_trace.size(),
            "mcn_closed_form: traces must have equal length");
    require(v_b_trace.size() >= 2, "mcn_closed_form: grid too coarse, need at least 2 samples");
    require(t_index < v_b_trace.size(), "mcn_closed_form: t_index outside trace");
    const double Z = p.soma_rate();
    const double gb = p.g_B / p.g_L;
    const double ga = p.g_A / p.g_L;
    const double t = static_cast<double>(t_index) * dt;
    auto f = [&](std::size_t k) {
        const double s = static_cast<double>(k) * dt;
        return std::exp(Z * (s - t)) / p.tau_L * (gb * v_b_trace[k] + ga * v_a_trace[k]);
    };
    // Composite Simpson over [0, t]; trailing odd interval integrated with the
    // three-point Newton-Cotes rule through the last quadratic.
    double acc = 0.0;
    std::size_t k = 0;
    while (k + 2 <= t_index) {
        acc += dt / 3.0 * (f(k) + 4.0 * f(k + 1) + f(k + 2));
        k += 2;
    }
    if (k + 1 == t_index) {
        if (k == 0) {
            acc += dt / 2.0 * (f(0) + f(1));
        } else {
            acc += dt / 12.0 * (-f(k - 1) + 8.0 * f(k) + 5.0 * f(k + 1));
        }
    }
    return acc;
}

double surrogate_grad(double u, const NeuronParams& p, SurrogateCenter center) {
    const double uc = center == SurrogateCenter::Threshold ? u - p.v_th : u;
    const double q = std::numbers::pi * p.tau_L * uc;
    return 2.0 * p.tau_L / (4.0 + q * q);
}

double smooth_spike(double u, const NeuronParams& p, SurrogateCenter center) {
    const double uc = center == SurrogateCenter::Threshold ? u - p.v_th : u;
    return std::atan(std::numbers::pi * p.tau_L * uc / 2.0) / std::numbers::pi + 0.5;
}

}  // namespace mcsfqf
