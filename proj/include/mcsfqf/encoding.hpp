#pragma once

#include <cstdint>

#include "mcsfqf/common.hpp"
#include "mcsfqf/neuron.hpp"

namespace mcsfqf {

// Gaussian receptive-field population for scalar values in [0, 1]. Preferred
// stimuli tile [0, 1] with mu_j = j/(m-1) and every neuron shares the same
// receptive width.
struct PopulationCodec {
    int m = 64;
    double sigma = 0.05;
    Vec mu;
    Vec phi;
    std::uint64_t seed = 0;

    static PopulationCodec make(int m, double sigma, std::uint64_t seed);
    void validate() const;
};

// r_j = phi_j exp(-(tau - mu_j)^2 / (2 sigma^2)); rejects tau outside [0, 1].
Vec gaussian_rate(const PopulationCodec& codec, double tau);

// Per-step spike probability of a rate-r Poisson neuron emitting at least one
// event in a unit interval: p = 1 - exp(-r).
inline double poisson_spike_prob(double rate) { return 1.0 - std::exp(-rate); }

// Bernoulli draw per neuron-step with p_j = 1 - exp(-r_j); keyed by
// (seed, tau_index, step, neuron), so two codecs with the same seed produce
// bit-identical trains regardless of call order.
SpikeTrain encode_population_spikes(const PopulationCodec& codec, double tau,
                                    std::uint64_t tau_index, int T);

// Ablation embedding: component i = cos(i pi tau), i in [0, m).
Vec cosine_embedding(double tau, int m);

}  // namespace mcsfqf
