#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace vmvspread {

inline constexpr double pi = 3.14159265358979323846;

using cdouble = std::complex<double>;

inline double sq(double x) { return x * x; }

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi);
}

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Compensated accumulation (Kahan-Neumaier); keeps panel sums independent of
// how much cancellation the integrand produces.
class KahanSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Fixed-order pairwise reduction; result depends only on element order, never
// on thread partitioning of whoever filled the buffer.
inline double pairwise_sum(const double* data, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += data[i];
        return s;
    }
    std::size_t half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), v.size());
}

struct McEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    std::int64_t n_paths = 0;
    std::uint64_t seed = 0;
};

}
