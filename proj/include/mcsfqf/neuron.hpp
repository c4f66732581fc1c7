#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcsfqf/common.hpp"

namespace mcsfqf {

// Where the spike-gradient surrogate is centered. Threshold shifts the peak
// to u = v_th; Zero keeps the literal printed form peaked at u = 0.
enum class SurrogateCenter { Threshold, Zero };

struct NeuronParams {
    double tau_L = 2.0;
    double tau_A = 2.0;
    double tau_B = 2.0;
    double g_A = 1.0;
    double g_B = 1.0;
    double g_L = 1.0;
    double v_th = 1.0;
    double v_reset = 0.0;

    void validate() const;

    // Discrete somatic self-coupling m = 1 - 1/tau_L - (g_B + g_A)/(g_L tau_L).
    double soma_leak() const { return 1.0 - 1.0 / tau_L - (g_B + g_A) / (g_L * tau_L); }
    double basal_coupling() const { return g_B / (g_L * tau_L); }
    double apical_coupling() const { return g_A / (g_L * tau_L); }
    // Exponential rate Z = (g_B + g_A + g_L) / (tau_L g_L) of the somatic ODE.
    double soma_rate() const { return (g_B + g_A + g_L) / (tau_L * g_L); }
};

enum class SomaStability { Stable, Oscillatory, Unstable };
SomaStability classify_soma(const NeuronParams& p);
// Emits at most one diagnostic per process for each abnormal class.
void warn_soma_stability(const NeuronParams& p);

struct LifState {
    Vec u;
    std::vector<std::uint8_t> last_spike;
    static LifState zeros(std::size_t n) { return {Vec(n, 0.0), std::vector<std::uint8_t>(n, 0)}; }
    std::size_t size() const { return u.size(); }
};

struct McnState {
    Vec v_b;
    Vec v_a;
    Vec u;
    std::vector<std::uint8_t> last_spike;
    static McnState zeros(std::size_t n) {
        return {Vec(n, 0.0), Vec(n, 0.0), Vec(n, 0.0), std::vector<std::uint8_t>(n, 0)};
    }
    std::size_t size() const { return u.size(); }
};

// Binary activity over a simulation window, row per time step.
struct SpikeTrain {
    std::size_t steps = 0;
    std::size_t neurons = 0;
    std::vector<double> data;

    SpikeTrain() = default;
    SpikeTrain(std::size_t t, std::size_t n) : steps(t), neurons(n), data(t * n, 0.0) {}
    double& at(std::size_t t, std::size_t n) { return data[t * neurons + n]; }
    double at(std::size_t t, std::size_t n) const { return data[t * neurons + n]; }
    double* step(std::size_t t) { return data.data() + t * neurons; }
    const double* step(std::size_t t) const { return data.data() + t * neurons; }
    std::size_t count() const;
};

// One Euler step of the leaky integrator, unit step size:
//   u' = (1 - 1/tau_L) u + (1/tau_L) x, spike iff u' > v_th (strict), hard reset.
void lif_step(LifState& s, std::span<const double> x, const NeuronParams& p);

// Same update without threshold or reset; the potential is the output.
void li_step(Vec& u, std::span<const double> x, const NeuronParams& p);

// v' = (1 - 1/tau) v + (1/tau) x.
void dendrite_step(Vec& v, std::span<const double> x, double tau);
inline double dendrite_step(double v, double x, double tau) {
    return (1.0 - 1.0 / tau) * v + x / tau;
}

// Somatic integration of already-advanced dendritic potentials:
//   u' = m u + (g_B/(g_L tau_L)) v_b + (g_A/(g_L tau_L)) v_a,
// with the LIF spike/reset rule.
void mcn_soma_step(McnState& s, const NeuronParams& p);

// Euler integration of the full dendrite+soma system at step size h with
// spiking disabled; x_b/x_a are the drive samples on the grid. Used by the
// continuous-time oracle comparisons.
struct McnTraces {
    Vec v_b;
    Vec v_a;
    Vec u;
};
McnTraces mcn_euler_trace(const Vec& x_b, const Vec& x_a, const NeuronParams& p, double h);

// Closed-form somatic potential
//   u(t) = int_0^t e^{Z (s - t)} (1/tau_L) [ (g_B/g_L) V_b(s) + (g_A/g_L) V_a(s) ] ds
// evaluated by composite Simpson quadrature over dendritic traces sampled at
// spacing dt from time 0. t_index selects the grid point to evaluate at.
double mcn_closed_form(const Vec& v_b_trace, const Vec& v_a_trace, const NeuronParams& p,
                       double dt, std::size_t t_index);

// d spike / d potential surrogate: 2 tau_L / (4 + (pi tau_L u_c)^2).
double surrogate_grad(double u, const NeuronParams& p,
                      SurrogateCenter center = SurrogateCenter::Threshold);

// Antiderivative of the surrogate: (1/pi) atan(pi tau_L u_c / 2) + 1/2.
// Used as a differentiable stand-in for the spike during gradient checks.
double smooth_spike(double u, const NeuronParams& p,
                    SurrogateCenter center = SurrogateCenter::Threshold);

}  // namespace mcsfqf
