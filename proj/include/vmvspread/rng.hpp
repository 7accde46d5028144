#pragma once

#include <cmath>
#include <cstdint>

#include "math.hpp"

namespace vmvspread {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

inline constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ull;

}  // namespace detail

// Counter-based random stream keyed by (seed, path, step). Every draw is a
// pure function of the key and a running draw counter, so path results do not
// depend on thread scheduling, and extending a simulation backwards in time
// (more warmup steps) leaves the draws of the shared steps untouched.
class StepStream {
public:
    StepStream(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
        std::uint64_t h = detail::mix64(seed + detail::golden);
        h = detail::mix64(h ^ ((path + 1) * 0xC2B2AE3D27D4EB4Full));
        h = detail::mix64(h ^ ((step + 1) * 0xD6E8FEB86659FD93ull));
        base_ = h;
    }

    // uniform on (0,1), never hitting either endpoint
    double uniform() {
        std::uint64_t v = detail::mix64(base_ + (++k_) * detail::golden);
        return ((v >> 11) + 0.5) * 0x1.0p-53;
    }

    void normal_pair(double& z1, double& z2) {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * pi * u2;
        z1 = r * std::cos(a);
        z2 = r * std::sin(a);
    }

    double normal() {
        double z1, z2;
        normal_pair(z1, z2);
        return z1;
    }

    // inversion by sequential search; exactly one uniform per draw
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        double u = uniform();
        double p = std::exp(-mean);
        double cum = p;
        int k = 0;
        const int cap = static_cast<int>(mean + 40.0 * std::sqrt(mean) + 50.0);
        while (u > cum && k < cap) {
            ++k;
            p *= mean / k;
            cum += p;
        }
        return k;
    }

    double exponential(double mean) { return -mean * std::log(uniform()); }

    // Marsaglia-Tsang; draw count varies but stays inside this stream's counter
    double gamma(double shape, double scale) {
        if (shape < 1.0) {
            double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / (3.0 * std::sqrt(d));
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v * scale;
        }
    }

private:
    std::uint64_t base_;
    std::uint64_t k_ = 0;
};

}
