#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "riskmpc/linalg.hpp"

namespace riskmpc {

// Splittable pseudo-random stream: xoshiro256++ seeded through splitmix64
// from a (seed, stream-index) pair. Distinct pairs give independent
// streams with reproducible output across platforms, which keeps
// Monte-Carlo runs bit-stable regardless of worker scheduling.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}

    RngStream(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in (0,1), 53-bit mantissa, never exactly 0.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (cached second draw).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    Vec normal_vector(Eigen::Index n) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Correlated Gaussian sampler x = mu + L z with L a (semidefinite)
// Cholesky factor of the covariance.
class GaussianSampler {
public:
    GaussianSampler(Vec mu, const Mat& cov);

    Vec draw(RngStream& rng) const {
        return mu_ + chol_ * rng.normal_vector(mu_.size());
    }

    const Vec& mean() const { return mu_; }

private:
    Vec mu_;
    Mat chol_;
};

}  // namespace riskmpc
