#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "math.hpp"

namespace vmvspread {

// Bivariate Levy driver L = (U, V) described through its cumulant
//   psi(z1,z2) = i z1 g1 + i z2 g2
//              - 1/2 (c1^2 z1^2 + 2 rho c1 c2 z1 z2 + c2^2 z2^2) + jump part,
// evaluated on complex arguments wherever the exponential moments exist.
// Built-ins: pure Gaussian, and Gaussian plus a finite-activity compound
// Poisson stream with joint normal jump marks (both entire in (z1,z2)).
// A custom model supplies its own cumulant, its jump exponential integral
// a,b -> int (e^{a z1 + b z2} - 1) l(dz), and the analyticity strip.

struct CustomLevy {
    std::function<cdouble(cdouble, cdouble)> cumulant;
    std::function<double(double, double)> jump_exp_integral;
    double strip_lo = -std::numeric_limits<double>::infinity();
    double strip_hi = std::numeric_limits<double>::infinity();
};

class BivariateLevySpec {
public:
    enum class Kind { Gaussian, Merton, Custom };

    static BivariateLevySpec gaussian(double gamma1, double gamma2, double c1, double c2,
                                      double rho) {
        BivariateLevySpec s;
        s.kind_ = Kind::Gaussian;
        s.gamma1_ = gamma1;
        s.gamma2_ = gamma2;
        s.set_brownian(c1, c2, rho);
        return s;
    }

    static BivariateLevySpec merton(double gamma1, double gamma2, double c1, double c2, double rho,
                                    double lambda, double jump_mean1, double jump_mean2,
                                    double jump_cov11, double jump_cov12, double jump_cov22) {
        BivariateLevySpec s;
        s.kind_ = Kind::Merton;
        s.gamma1_ = gamma1;
        s.gamma2_ = gamma2;
        s.set_brownian(c1, c2, rho);
        if (!(lambda >= 0.0)) throw std::invalid_argument("levy: jump intensity must be >= 0");
        if (!(jump_cov11 >= 0.0) || !(jump_cov22 >= 0.0) ||
            jump_cov11 * jump_cov22 - jump_cov12 * jump_cov12 < -1e-15)
            throw std::invalid_argument("levy: jump covariance must be positive semidefinite");
        s.lambda_ = lambda;
        s.mu1_ = jump_mean1;
        s.mu2_ = jump_mean2;
        s.s11_ = jump_cov11;
        s.s12_ = jump_cov12;
        s.s22_ = jump_cov22;
        return s;
    }

    static BivariateLevySpec custom(CustomLevy c) {
        if (!c.cumulant) throw std::invalid_argument("levy: custom model needs a cumulant");
        BivariateLevySpec s;
        s.kind_ = Kind::Custom;
        s.custom_ = std::move(c);
        return s;
    }

    Kind kind() const { return kind_; }
    double gamma1() const { return gamma1_; }
    double gamma2() const { return gamma2_; }
    double c1() const { return c1_; }
    double c2() const { return c2_; }
    double rho() const { return rho_; }
    double lambda() const { return lambda_; }
    double jump_mean1() const { return mu1_; }
    double jump_mean2() const { return mu2_; }
    double jump_cov11() const { return s11_; }
    double jump_cov12() const { return s12_; }
    double jump_cov22() const { return s22_; }
    bool has_jumps() const { return kind_ == Kind::Merton && lambda_ > 0.0; }
    bool custom_declares_jumps() const {
        return kind_ == Kind::Custom && static_cast<bool>(custom_.jump_exp_integral);
    }

    cdouble cumulant(cdouble z1, cdouble z2) const {
        if (kind_ == Kind::Custom) return custom_.cumulant(z1, z2);
        const cdouble i(0.0, 1.0);
        cdouble v = i * z1 * gamma1_ + i * z2 * gamma2_ -
                    0.5 * (c1_ * c1_ * z1 * z1 + 2.0 * rho_ * c1_ * c2_ * z1 * z2 +
                           c2_ * c2_ * z2 * z2);
        if (kind_ == Kind::Merton && lambda_ > 0.0) {
            cdouble expo = i * (z1 * mu1_ + z2 * mu2_) -
                           0.5 * (z1 * z1 * s11_ + 2.0 * z1 * z2 * s12_ + z2 * z2 * s22_);
            v += lambda_ * (std::exp(expo) - 1.0);
        }
        return v;
    }

    cdouble marginal_cumulant_u(cdouble z) const { return cumulant(z, cdouble(0.0)); }
    cdouble marginal_cumulant_v(cdouble z) const { return cumulant(cdouble(0.0), z); }

    // int (e^{a z1 + b z2} - 1) l(dz)
    double jump_exp_integral(double a, double b) const {
        switch (kind_) {
            case Kind::Gaussian:
                return 0.0;
            case Kind::Merton:
                return lambda_ * (jump_mgf(a, b) - 1.0);
            case Kind::Custom:
                if (!custom_.jump_exp_integral)
                    throw std::invalid_argument("levy: custom model has no jump evaluator");
                return custom_.jump_exp_integral(a, b);
        }
        return 0.0;
    }

    // int (e^{a z1} - 1)(e^{b z2} - 1) l(dz)
    double exp_jump_moment(double a, double b) const {
        return jump_exp_integral(a, b) - jump_exp_integral(a, 0.0) - jump_exp_integral(0.0, b);
    }

    // int (e^{a z1} - 1)^2 l(dz) and the z2 analogue
    double exp_jump_square_u(double a) const {
        return jump_exp_integral(2.0 * a, 0.0) - 2.0 * jump_exp_integral(a, 0.0);
    }
    double exp_jump_square_v(double b) const {
        return jump_exp_integral(0.0, 2.0 * b) - 2.0 * jump_exp_integral(0.0, b);
    }

    // True when psi stays finite for Im(z) of either coordinate anywhere in
    // [imag_lo, imag_hi]. Built-ins are entire.
    bool analyticity_check(double imag_lo, double imag_hi) const {
        if (imag_lo > imag_hi) throw std::invalid_argument("levy: empty analyticity interval");
        if (kind_ != Kind::Custom) return true;
        return imag_lo >= custom_.strip_lo && imag_hi <= custom_.strip_hi;
    }

private:
    void set_brownian(double c1, double c2, double rho) {
        if (!(c1 >= 0.0) || !(c2 >= 0.0))
            throw std::invalid_argument("levy: Brownian scales must be >= 0");
        if (!(rho > -1.0 && rho < 1.0))
            throw std::invalid_argument("levy: correlation must lie in (-1,1)");
        c1_ = c1;
        c2_ = c2;
        rho_ = rho;
    }

    double jump_mgf(double a, double b) const {
        return std::exp(a * mu1_ + b * mu2_ +
                        0.5 * (a * a * s11_ + 2.0 * a * b * s12_ + b * b * s22_));
    }

    Kind kind_ = Kind::Gaussian;
    double gamma1_ = 0.0, gamma2_ = 0.0;
    double c1_ = 0.0, c2_ = 0.0, rho_ = 0.0;
    double lambda_ = 0.0;
    double mu1_ = 0.0, mu2_ = 0.0;
    double s11_ = 0.0, s12_ = 0.0, s22_ = 0.0;
    CustomLevy custom_;
};

}
