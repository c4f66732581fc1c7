#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcsfqf/common.hpp"
#include "mcsfqf/network.hpp"

namespace mcsfqf {

struct LossConfig {
    double epsilon = 1.0;  // Huber threshold
    double gamma = 0.99;   // discount
    void validate() const {
        require(epsilon > 0.0, "LossConfig: epsilon must be positive");
        require(gamma > 0.0 && gamma <= 1.0, "LossConfig: gamma must lie in (0, 1]");
    }
};

// Huber kernel L(eps, d) and its derivative.
double huber_kernel(double delta, double eps);
double huber_kernel_grad(double delta, double eps);

// delta(i, j) = target_i - current_j with target_i = r + gamma * next_i
// (bootstrap dropped on terminal transitions).
Mat td_errors(double reward, const Vec& next_quantiles, const Vec& cur_quantiles, double gamma,
              bool terminal = false);

// Mean over target rows, sum over quantile columns of
// |tau_hat_j - (1 - H(delta))| L(eps, delta) / eps.
double huber_quantile_loss(const Vec& tau_hat, const Mat& deltas, double eps);

// d loss / d current_j for the reduction above.
Vec huber_quantile_loss_grad(const Vec& tau_hat, const Mat& deltas, double eps);

// dWL/dtau_i = 2 F(tau_i) - F(tau_hat_i) - F(tau_hat_{i-1}) for interior i.
// f_interior holds F at tau_1..tau_{N-1}, f_hat holds F at the N midpoints;
// the result has N-1 entries.
Vec wasserstein_grad_tau(const FractionSet& fr, const Vec& f_interior, const Vec& f_hat);

enum class FractionGradMode { Paper, SoftmaxChain };

// Gradient of the Wasserstein loss for the fraction-proposal weights.
// Paper mode uses Delta_{i,k} = -p_k p_i + (N - i + 1) p_i (1 - p_i) exactly
// as printed; SoftmaxChain uses the cumulative-softmax Jacobian
// dtau_n/dphi_i = p_i (1[i < n] - tau_n).
Mat fraction_weight_grad(const FractionSet& fr, const Vec& wl_grads, const Mat& o_s,
                         FractionGradMode mode);

struct GradientSet {
    NetworkParams t;
    static GradientSet zeros(const NetConfig& cfg) { return {NetworkParams::zeros(cfg)}; }
    void scale(double s);
    double max_abs() const;
    bool finite() const;
};

// Reverse pass over the recorded forward window. dvalues is [N x actions],
// the loss gradient at the quantile outputs. Gradients accumulate into out.
// The spike derivative is the surrogate at the taped pre-threshold potential;
// in smooth mode this is the exact derivative of the forward computation.
void stbp_backward(const TapeRecord& tape, const Mat& dvalues, const NetworkParams& w,
                   const NetConfig& cfg, GradientSet& out);

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    NetworkParams m, v;

    static AdamState make(const NetConfig& cfg, double lr);
};
void adam_step(AdamState& opt, NetworkParams& params, const GradientSet& grads);

struct RmspropState {
    double lr = 2.5e-9;
    double alpha = 0.99;
    double eps = 1e-8;
    Mat acc;

    static RmspropState make(std::size_t rows, std::size_t cols, double lr);
};
void rmsprop_step(RmspropState& opt, Mat& w, const Mat& grad);

}  // namespace mcsfqf
