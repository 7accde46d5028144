#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "errors.hpp"
#include "fourier.hpp"
#include "levy.hpp"
#include "market.hpp"
#include "quadrature.hpp"

namespace vmvspread {

// Normal equations of the variance-minimal forward hedge at time t,
// A phi = b, with A symmetric.
struct HedgeSystem {
    double a11 = 0.0;
    double a12 = 0.0;
    double a22 = 0.0;
    double b1 = 0.0;
    double b2 = 0.0;
    double t = 0.0;
};

struct HedgeSolution {
    double phi1;
    double phi2;
    double determinant;
    double condition;  // spectral condition estimate of the symmetric matrix
};

namespace detail {

struct HedgeGeometry {
    double kappa1, kappa2;  // effective kernel values at the live lag
    double disc;            // e^{-r t}, valuation-date discount

    HedgeGeometry(const MarketSnapshot& snap, const SpotModelSpec& m1, const SpotModelSpec& m2,
                  const OptionTerms& terms) {
        if (!(snap.t <= terms.maturity))
            throw std::invalid_argument("hedging: snapshot after maturity");
        kappa1 = m1.effective_kernel().eval(terms.maturity, snap.t);
        kappa2 = m2.effective_kernel().eval(terms.maturity, snap.t);
        disc = std::exp(-terms.rate * snap.t);
    }
};

struct JumpNode {
    double z1, z2, w;
};

// Tensor Gauss-Hermite grid against the bivariate normal jump law; weights
// sum to one.
inline std::vector<JumpNode> jump_density_nodes(const BivariateLevySpec& levy, int n) {
    double s11 = levy.jump_cov11(), s12 = levy.jump_cov12(), s22 = levy.jump_cov22();
    double l11 = std::sqrt(std::max(s11, 0.0));
    double l21 = l11 > 0.0 ? s12 / l11 : 0.0;
    double l22 = std::sqrt(std::max(s22 - l21 * l21, 0.0));
    const QuadRule& gh = gauss_hermite_rule(n);
    std::vector<JumpNode> nodes;
    nodes.reserve(static_cast<std::size_t>(n) * n);
    const double root2 = std::sqrt(2.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double x1 = root2 * gh.x[i];
            double x2 = root2 * gh.x[j];
            nodes.push_back({levy.jump_mean1() + l11 * x1,
                             levy.jump_mean2() + l21 * x1 + l22 * x2,
                             gh.w[i] * gh.w[j] / pi});
        }
    }
    return nodes;
}

}  // namespace detail

// Matrix of instantaneous forward-increment covariances:
//   a11 = e^{-rt} f1^2 { c1^2 k1^2 + int (e^{z1 k1} - 1)^2 l(dz) }
//   a12 = e^{-rt} f1 f2 { rho c1 c2 k1 k2 / 2 + int (e^{z1 k1}-1)(e^{z2 k2}-1) l(dz) }
// with k_i the effective kernel at the live lag.
inline HedgeSystem assemble_matrix(const MarketSnapshot& snap, const SpotModelSpec& m1,
                                   const SpotModelSpec& m2, const BivariateLevySpec& levy,
                                   const OptionTerms& terms) {
    detail::HedgeGeometry geo(snap, m1, m2, terms);
    const double k1 = geo.kappa1, k2 = geo.kappa2;
    HedgeSystem sys;
    sys.t = snap.t;
    double brownian11 = sq(levy.c1() * k1);
    double brownian22 = sq(levy.c2() * k2);
    double brownian12 = 0.5 * levy.rho() * levy.c1() * levy.c2() * k1 * k2;
    sys.a11 = geo.disc * snap.f1 * snap.f1 * (brownian11 + levy.exp_jump_square_u(k1));
    sys.a22 = geo.disc * snap.f2 * snap.f2 * (brownian22 + levy.exp_jump_square_v(k2));
    sys.a12 = geo.disc * snap.f1 * snap.f2 * (brownian12 + levy.exp_jump_moment(k1, k2));
    if (!std::isfinite(sys.a11) || !std::isfinite(sys.a12) || !std::isfinite(sys.a22))
        throw NumericsError("hedging: divergent jump moment in matrix assembly");
    return sys;
}

// Right-hand side built from the pricing function C(f1, f2) at valuation time
// and its forward deltas. The jump part integrates the nonlinear price change
// against the jump law on a 32x32 Gauss-Hermite grid.
inline HedgeSystem assemble_vector(const MarketSnapshot& snap, const SpotModelSpec& m1,
                                   const SpotModelSpec& m2, const BivariateLevySpec& levy,
                                   const OptionTerms& terms, const Greeks& g,
                                   const std::function<double(double, double)>& price_fn,
                                   int gh_nodes = 32) {
    detail::HedgeGeometry geo(snap, m1, m2, terms);
    const double k1 = geo.kappa1, k2 = geo.kappa2;
    const double f1 = snap.f1, f2 = snap.f2;
    HedgeSystem sys;
    sys.t = snap.t;
    double cross = 0.5 * levy.rho() * levy.c1() * levy.c2() * k1 * k2;
    sys.b1 = g.df1 * f1 * f1 * sq(levy.c1() * k1) + cross * g.df2 * f1 * f2;
    sys.b2 = g.df2 * f2 * f2 * sq(levy.c2() * k2) + cross * g.df1 * f1 * f2;
    if (levy.custom_declares_jumps())
        throw std::invalid_argument(
            "hedging: jump corrections to b need a normal jump law, not a custom model");
    if (levy.has_jumps()) {
        double base = price_fn(f1, f2);
        KahanSum j1, j2;
        for (const auto& nd : detail::jump_density_nodes(levy, gh_nodes)) {
            double e1 = std::expm1(nd.z1 * k1);
            double e2 = std::expm1(nd.z2 * k2);
            double shifted = price_fn(f1 * (1.0 + e1), f2 * (1.0 + e2));
            double excess = shifted - base - e1 * f1 * g.df1 - e2 * f2 * g.df2;
            j1.add(nd.w * excess * f1 * e1);
            j2.add(nd.w * excess * f2 * e2);
        }
        sys.b1 += levy.lambda() * j1.value();
        sys.b2 += levy.lambda() * j2.value();
    }
    sys.b1 *= geo.disc;
    sys.b2 *= geo.disc;
    if (!std::isfinite(sys.b1) || !std::isfinite(sys.b2))
        throw NumericsError("hedging: vector assembly produced a non-finite entry");
    return sys;
}

inline HedgeSystem assemble_hedge_system(const MarketSnapshot& snap, const SpotModelSpec& m1,
                                         const SpotModelSpec& m2, const BivariateLevySpec& levy,
                                         const OptionTerms& terms, const Greeks& g,
                                         const std::function<double(double, double)>& price_fn,
                                         int gh_nodes = 32) {
    HedgeSystem sys = assemble_matrix(snap, m1, m2, levy, terms);
    HedgeSystem vec = assemble_vector(snap, m1, m2, levy, terms, g, price_fn, gh_nodes);
    sys.b1 = vec.b1;
    sys.b2 = vec.b2;
    return sys;
}

// Direct 2x2 solve with a residual guarantee: one long-double refinement pass
// keeps ||A phi - b|| below 1e-12 ||b||.
inline HedgeSolution solve_hedge(const HedgeSystem& sys) {
    double scale = std::max({std::abs(sys.a11), std::abs(sys.a12), std::abs(sys.a22)});
    double det = sys.a11 * sys.a22 - sys.a12 * sys.a12;
    if (scale == 0.0 || std::abs(det) < 1e-14 * scale * scale)
        throw SingularSystemError("hedging: covariance matrix is numerically singular");

    long double a11 = sys.a11, a12 = sys.a12, a22 = sys.a22;
    long double b1 = sys.b1, b2 = sys.b2;
    long double d = a11 * a22 - a12 * a12;
    long double p1 = (b1 * a22 - b2 * a12) / d;
    long double p2 = (a11 * b2 - a12 * b1) / d;
    long double r1 = a11 * p1 + a12 * p2 - b1;
    long double r2 = a12 * p1 + a22 * p2 - b2;
    p1 -= (r1 * a22 - r2 * a12) / d;
    p2 -= (a11 * r2 - a12 * r1) / d;
    r1 = a11 * p1 + a12 * p2 - b1;
    r2 = a12 * p1 + a22 * p2 - b2;
    double bnorm = std::max(std::abs(sys.b1), std::abs(sys.b2));
    double rnorm = static_cast<double>(std::max(std::abs(r1), std::abs(r2)));
    if (bnorm > 0.0 && rnorm > 1e-12 * bnorm)
        throw NumericsError("hedging: solve residual exceeds tolerance");

    double tr = sys.a11 + sys.a22;
    double disc_root = std::sqrt(std::max(tr * tr - 4.0 * det, 0.0));
    double lam_hi = 0.5 * (std::abs(tr) + disc_root);
    double lam_lo = std::abs(det) / std::max(lam_hi, 1e-300);
    return {static_cast<double>(p1), static_cast<double>(p2), det,
            lam_hi / std::max(lam_lo, 1e-300)};
}

// Closed-form determinant of the Brownian-only matrix with unit constant
// kernels: e^{-2rt} f1^2 f2^2 c1^2 c2^2 (1 - rho^2/4).
inline double gaussian_det(double f1, double f2, double c1, double c2, double rho, double r,
                           double t) {
    return std::exp(-2.0 * r * t) * sq(f1 * f2 * c1 * c2) * (1.0 - 0.25 * rho * rho);
}

}
