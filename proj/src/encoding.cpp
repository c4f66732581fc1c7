#include "mcsfqf/encoding.hpp"

#include <cmath>
#include <numbers>

#include "mcsfqf/rng.hpp"

namespace mcsfqf {

PopulationCodec PopulationCodec::make(int m, double sigma, std::uint64_t seed) {
    PopulationCodec c;
    c.m = m;
    c.sigma = sigma;
    c.seed = seed;
    c.mu.resize(m);
    c.phi.assign(m, 1.0);
    for (int j = 0; j < m; ++j) c.mu[j] = m > 1 ? static_cast<double>(j) / (m - 1) : 0.5;
    c.validate();
    return c;
}

void PopulationCodec::validate() const {
    require(m >= 1, "PopulationCodec: population must be non-empty");
    require(sigma > 0.0, "PopulationCodec: sigma must be positive");
    require(static_cast<int>(mu.size()) == m && static_cast<int>(phi.size()) == m,
            "PopulationCodec: mu/phi size mismatch");
    for (int j = 1; j < m; ++j)
        require(mu[j] > mu[j - 1], "PopulationCodec: mu must be strictly increasing");
    for (double f : phi)
        require(f > 0.0 && f <= 1.0, "PopulationCodec: phi must lie in (0, 1]");
}

Vec gaussian_rate(const PopulationCodec& codec, double tau) {
    require(tau >= 0.0 && tau <= 1.0, "gaussian_rate: fraction outside [0, 1]");
    Vec r(codec.m);
    const double inv = 1.0 / (2.0 * codec.sigma * codec.sigma);
    for (int j = 0; j < codec.m; ++j) {
        const double d = tau - codec.mu[j];
        r[j] = codec.phi[j] * std::exp(-d * d * inv);
    }
    return r;
}

SpikeTrain encode_population_spikes(const PopulationCodec& codec, double tau,
                                    std::uint64_t tau_index, int T) {
    const Vec rate = gaussian_rate(codec, tau);
    SpikeTrain train(static_cast<std::size_t>(T), static_cast<std::size_t>(codec.m));
    Vec p(codec.m);
    for (int j = 0; j < codec.m; ++j) p[j] = poisson_spike_prob(rate[j]);
    const std::uint64_t key = codec.seed ^ rng_tag::kPopulation;
    for (int t = 0; t < T; ++t) {
        double* row = train.step(t);
        for (int j = 0; j < codec.m; ++j) {
            if (p[j] <= 0.0) continue;
            row[j] = u01(key, tau_index, static_cast<std::uint64_t>(t),
                         static_cast<std::uint64_t>(j)) < p[j]
                         ? 1.0
                         : 0.0;
        }
    }
    return train;
}

Vec cosine_embedding(double tau, int m) {
    require(tau >= 0.0 && tau <= 1.0, "cosine_embedding: fraction outside [0, 1]");
    Vec out(m);
    for (int i = 0; i < m; ++i) out[i] = std::cos(i * std::numbers::pi * tau);
    return out;
}

}  // namespace mcsfqf
