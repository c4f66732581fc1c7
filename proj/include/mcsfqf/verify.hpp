#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcsfqf/common.hpp"
#include "mcsfqf/gradcheck.hpp"

namespace mcsfqf {

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;      // the measured quantity (error, distance, ...)
    double threshold = 0.0;  // what it was compared against
    std::string detail;
};

// Continuous-time somatic integration against the closed-form solution:
// fine-step Euler at h and h/2 vs Simpson quadrature of analytic dendrite
// traces. fault != "" injects a wrong basal leak into the Euler path.
std::vector<CheckResult> check_theorem1(double h = 1e-3, const std::string& fault = "");

// Constant-drive firing reproduction: the discrete MCN emits spikes under the
// reference parameter set and the count is run-to-run identical.
CheckResult check_constant_drive_firing();

// Population statistics: empirical per-neuron frequencies vs analytic
// Bernoulli probabilities, plus off-receptive-field selectivity.
std::vector<CheckResult> check_encoding_statistics(int windows = 10000, std::uint64_t seed = 11);

// Fraction invariants over random logits.
CheckResult check_fraction_invariants(int trials = 1000, int n = 32, std::uint64_t seed = 5);

// Gradient descent on the fraction gradient with an identity quantile
// function converges to uniform spacing.
CheckResult check_wasserstein_descent(int n = 32, int steps = 10000, std::uint64_t seed = 3);

// Quantile-head-only quantile regression on a three-atom distribution.
struct QrTrainResult {
    Vec tau_hat;
    Vec learned;       // final head outputs per fraction
    Vec atom_quantiles;
    Vec fixed_points;  // expected-Huber-loss minimizers per fraction
    double max_err_vs_quantiles = 0.0;
    double max_err_vs_fixed_points = 0.0;
};
QrTrainResult train_quantile_head_qr(int n_fractions, int steps, std::uint64_t seed);

// Machine-checkable form: the trained head lands on the expected-loss
// minimizers of the Huber quantile objective.
CheckResult check_qr_fixed_points(std::uint64_t seed = 17);

std::vector<CheckResult> run_verification_suite(const std::string& fault = "");

}  // namespace mcsfqf
