#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace dyadflow {

/// Seeded random source shared by the sampler and simulator. One instance per chain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return unif_(engine_); }
    double normal() { return norm_(engine_); }
    double normal(double mean, double sd) { return mean + sd * norm_(engine_); }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i) z[i] = norm_(engine_);
        return z;
    }

    // shape/scale parameterisation
    double gamma(double shape, double scale) {
        std::gamma_distribution<double> g(shape, scale);
        return g(engine_);
    }

    // X ~ IG(shape, rate)  <=>  1/X ~ Gamma(shape, 1/rate)
    double inv_gamma(double shape, double rate) { return 1.0 / gamma(shape, 1.0 / rate); }

    /// Standard half-Cauchy draw, |N(0,1)/N(0,1)|.
    double half_cauchy() { return std::abs(norm_(engine_) / norm_(engine_)); }

    /// Uniform integer in [0, bound) by rejection on the raw 64-bit engine output.
    std::uint64_t below(std::uint64_t bound);

    std::mt19937_64 &engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

inline std::uint64_t Rng::below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

}  // namespace dyadflow
