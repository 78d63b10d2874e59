#include "fedbayes/rng.hpp"

#include <cmath>
#include <numbers>

#include "fedbayes/errors.hpp"

namespace fedbayes::num {

namespace {

// SplitMix64 finalizer; full-avalanche 64-bit mix.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fold(std::uint64_t key, std::uint64_t element) {
    return mix64(key ^ mix64(element + 0xA24BAED4963EE407ULL));
}

} // namespace

Rng::Rng(const SeedPath& sp) {
    std::uint64_t key = mix64(sp.master_seed);
    for (std::uint64_t element : sp.path) key = fold(key, element);
    key_ = key;
}

std::uint64_t Rng::next_u64() {
    // output i = splitmix64 step at position (key + i); a pure counter map
    std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    // Box-Muller on open-interval uniforms
    double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::gamma(double alpha) {
    if (!(alpha > 0.0)) throw ArgumentError("gamma shape must be positive");
    if (alpha < 1.0) {
        // boost: G(a) = G(a+1) * U^(1/a)
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    // Marsaglia-Tsang squeeze
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = uniform();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v)))
            return d * v;
    }
}

std::vector<double> Rng::dirichlet(const std::vector<double>& alpha) {
    if (alpha.empty()) throw ArgumentError("dirichlet needs at least one alpha");
    std::vector<double> draw(alpha.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        draw[i] = gamma(alpha[i]);
        sum += draw[i];
    }
    while (sum <= 0.0) {
        // all gammas underflowed; retry from the stream's next position
        sum = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            draw[i] = gamma(alpha[i]);
            sum += draw[i];
        }
    }
    for (double& d : draw) d /= sum;
    return draw;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw ArgumentError("uniform_index needs n > 0");
    // rejection sampling; no modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % n);
}

} // namespace fedbayes::num
