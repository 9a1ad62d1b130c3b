#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace qmr {

// Seeded splitmix64 stream with a splittable-seed contract: split(k) derives
// an independent child generator from (state, k) without advancing the
// parent. Concurrent tasks each own a child split by task index, so results
// do not depend on scheduling.
//
// All samplers consume a fixed number of uniforms per draw (inverse-CDF
// style), which keeps byte-for-byte reproducibility independent of any
// standard-library distribution implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed + kGamma)) {}

    std::uint64_t next_u64() {
        state_ += kGamma;
        return mix(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    Rng split(std::uint64_t stream) const {
        return Rng(mix(state_ ^ mix(stream + kGamma)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Inverse-CDF Poisson draw; exactly one uniform consumed.
    int poisson(double lambda) {
        if (lambda < 0.0 || !(lambda <= 700.0)) {
            throw std::invalid_argument("Rng::poisson: lambda must be in [0, 700]");
        }
        if (lambda == 0.0) {
            next_u64();
            return 0;
        }
        const double u = uniform();
        double pmf = std::exp(-lambda);
        double cdf = pmf;
        int k = 0;
        // Hard cap far beyond any realistic tail crossing.
        const int cap = static_cast<int>(lambda + 40.0 * std::sqrt(lambda) + 50.0);
        while (u >= cdf && k < cap) {
            ++k;
            pmf *= lambda / static_cast<double>(k);
            cdf += pmf;
        }
        return k;
    }

    // Standard normal via Box-Muller; exactly two uniforms consumed.
    double normal() {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Index draw from nonnegative weights (need not be normalized);
    // exactly one uniform consumed.
    std::size_t discrete(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) {
            throw std::invalid_argument("Rng::discrete: weights sum to zero");
        }
        const double u = uniform() * total;
        double cum = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            cum += weights[i];
            if (u < cum) return i;
        }
        return weights.size() - 1;
    }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace qmr
