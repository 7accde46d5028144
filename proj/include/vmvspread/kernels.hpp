#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "linalg.hpp"
#include "math.hpp"

namespace vmvspread {

// Companion matrix of z^p + a1 z^{p-1} + ... + ap: ones on the superdiagonal,
// last row (-ap, ..., -a1).
inline Matrix companion_matrix(const std::vector<double>& ar) {
    const std::size_t p = ar.size();
    if (p == 0) throw std::invalid_argument("carma: empty autoregressive coefficients");
    Matrix a(p, p);
    for (std::size_t i = 0; i + 1 < p; ++i) a(i, i + 1) = 1.0;
    for (std::size_t j = 0; j < p; ++j) a(p - 1, j) = -ar[p - 1 - j];
    return a;
}

// Deterministic weight kernel g(T,s) = scale * base(T - s), stationary in the
// lag u = T - s. Families:
//   Constant   base(u) = 1                       (finite-window use only)
//   OU         base(u) = e^{-alpha u}
//   Carma      base(u) = b^T e^{A u} e_p, A the companion matrix of the
//              autoregressive polynomial, b = (b0,...,b_{q-1},1,0,...,0)
//   Tabulated  linear interpolation on a lag grid, zero beyond the last lag
class KernelSpec {
public:
    enum class Kind { Constant, OU, Carma, Tabulated };

    static KernelSpec constant(double scale) {
        KernelSpec k;
        k.kind_ = Kind::Constant;
        k.scale_ = scale;
        return k;
    }

    static KernelSpec ou(double scale, double alpha) {
        if (!(alpha > 0.0)) throw std::invalid_argument("kernel: OU mean reversion must be > 0");
        KernelSpec k;
        k.kind_ = Kind::OU;
        k.scale_ = scale;
        k.alpha_ = alpha;
        return k;
    }

    static KernelSpec carma(std::vector<double> ar, std::vector<double> ma, double scale = 1.0) {
        if (ar.empty()) throw std::invalid_argument("carma: need p >= 1");
        if (ma.size() >= ar.size()) throw std::invalid_argument("carma: need q < p");
        for (double a : ar)
            if (!(a > 0.0)) throw std::invalid_argument("carma: autoregressive coefficients must be > 0");
        if (!hurwitz_stable(ar))
            throw std::invalid_argument("carma: companion matrix is not stable");
        KernelSpec k;
        k.kind_ = Kind::Carma;
        k.scale_ = scale;
        k.ar_ = std::move(ar);
        k.ma_ = std::move(ma);
        k.companion_ = companion_matrix(k.ar_);
        return k;
    }

    static KernelSpec tabulated(std::vector<double> lags, std::vector<double> values,
                                double scale = 1.0) {
        if (lags.size() != values.size() || lags.size() < 2)
            throw std::invalid_argument("kernel: tabulated grid needs >= 2 matching entries");
        for (std::size_t i = 0; i < lags.size(); ++i) {
            if (!(lags[i] >= 0.0)) throw std::invalid_argument("kernel: tabulated lags must be >= 0");
            if (i > 0 && !(lags[i] > lags[i - 1]))
                throw std::invalid_argument("kernel: tabulated lags must be strictly increasing");
        }
        KernelSpec k;
        k.kind_ = Kind::Tabulated;
        k.scale_ = scale;
        k.lags_ = std::move(lags);
        k.values_ = std::move(values);
        return k;
    }

    Kind kind() const { return kind_; }
    double scale() const { return scale_; }
    double alpha() const { return alpha_; }
    const std::vector<double>& ar() const { return ar_; }
    const std::vector<double>& ma() const { return ma_; }
    const Matrix& companion() const { return companion_; }
    int p() const { return static_cast<int>(ar_.size()); }
    int q() const { return static_cast<int>(ma_.size()); }

    KernelSpec scaled(double factor) const {
        KernelSpec k = *this;
        k.scale_ *= factor;
        return k;
    }

    bool square_integrable() const { return kind_ != Kind::Constant; }

    // lag grid points, used to panelize quadratures over s
    std::vector<double> knots() const {
        return kind_ == Kind::Tabulated ? lags_ : std::vector<double>{};
    }

    double eval(double T, double s) const {
        if (s > T) throw std::invalid_argument("kernel: eval needs s <= T");
        return eval_lag(T - s);
    }

    double eval_lag(double lag) const {
        if (lag < 0.0) throw std::invalid_argument("kernel: negative lag");
        switch (kind_) {
            case Kind::Constant:
                return scale_;
            case Kind::OU:
                return scale_ * std::exp(-alpha_ * lag);
            case Kind::Carma: {
                Matrix e = matrix_exponential(companion_.scaled(lag));
                const std::size_t p = ar_.size();
                double v = 0.0;
                for (std::size_t i = 0; i < p; ++i) v += b_component(i) * e(i, p - 1);
                return scale_ * v;
            }
            case Kind::Tabulated: {
                if (lag >= lags_.back()) return lag == lags_.back() ? scale_ * values_.back() : 0.0;
                if (lag <= lags_.front()) return scale_ * values_.front();
                std::size_t hi = 1;
                while (lags_[hi] < lag) ++hi;
                double t = (lag - lags_[hi - 1]) / (lags_[hi] - lags_[hi - 1]);
                return scale_ * ((1.0 - t) * values_[hi - 1] + t * values_[hi]);
            }
        }
        return 0.0;
    }

    // int_horizon^inf g~(u)^2 du; the truncated-history mass left out when a
    // simulation starts "horizon" before the first time of interest.
    double l2_tail(double horizon) const {
        if (horizon < 0.0) throw std::invalid_argument("kernel: negative horizon");
        switch (kind_) {
            case Kind::Constant:
                throw std::domain_error("kernel: constant kernels have no square-integrable tail");
            case Kind::OU:
                return scale_ * scale_ * std::exp(-2.0 * alpha_ * horizon) / (2.0 * alpha_);
            case Kind::Carma: {
                const std::size_t p = ar_.size();
                Matrix e = matrix_exponential(companion_.scaled(horizon));
                std::vector<double> m(p);
                for (std::size_t i = 0; i < p; ++i) m[i] = e(i, p - 1);
                Matrix rhs(p, p);
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t j = 0; j < p; ++j) rhs(i, j) = -m[i] * m[j];
                Matrix g = lyapunov_solve(companion_, rhs);
                double v = 0.0;
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t j = 0; j < p; ++j)
                        v += b_component(i) * g(i, j) * b_component(j);
                return scale_ * scale_ * v;
            }
            case Kind::Tabulated: {
                double acc = 0.0;
                if (horizon < lags_.front())
                    acc += sq(values_.front()) * (lags_.front() - horizon);
                for (std::size_t i = 1; i < lags_.size(); ++i) {
                    double u1 = lags_[i - 1], u2 = lags_[i];
                    if (u2 <= horizon) continue;
                    double v1 = values_[i - 1], v2 = values_[i];
                    double slope = (v2 - v1) / (u2 - u1);
                    double lo = std::max(u1, horizon);
                    double va = v1 + slope * (lo - u1);
                    if (slope == 0.0) {
                        acc += va * va * (u2 - lo);
                    } else {
                        double vb = v2;
                        acc += (vb * vb * vb - va * va * va) / (3.0 * slope);
                    }
                }
                return scale_ * scale_ * acc;
            }
        }
        return 0.0;
    }

private:
    double b_component(std::size_t i) const {
        if (i < ma_.size()) return ma_[i];
        return i == ma_.size() ? 1.0 : 0.0;
    }

    Kind kind_ = Kind::Constant;
    double scale_ = 1.0;
    double alpha_ = 1.0;
    std::vector<double> ar_, ma_;
    std::vector<double> lags_, values_;
    Matrix companion_;
};

}
