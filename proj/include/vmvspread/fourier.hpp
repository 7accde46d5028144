#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "market.hpp"
#include "math.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace vmvspread {

struct OptionTerms {
    double maturity;
    double heat_rate;
    double rate;

    OptionTerms(double T, double k, double r) : maturity(T), heat_rate(k), rate(r) {
        if (!(heat_rate > 0.0)) throw std::invalid_argument("option: heat rate must be > 0");
        if (!(maturity >= 0.0)) throw std::invalid_argument("option: maturity must be >= 0");
    }
};

struct DampingConfig {
    double c = 1.5;

    DampingConfig() = default;
    explicit DampingConfig(double damping) : c(damping) {
        if (!(c > 1.0)) throw std::invalid_argument("damping: c must be > 1");
    }
};

struct QuadratureSpec {
    double rel_tol = 1e-10;
    double abs_tol = 1e-11;
    double y_max = 0.0;  // 0 = choose automatically from the integrand bounds
    int max_subdivisions = 6000;
};

// Fourier transform of the damped exchange payoff x -> e^{-cx}(e^x - A)^+:
//   A^{1-c-iy} / ((c+iy)(c+iy-1)), valid for c > 1.
inline cdouble payoff_transform(double c, double A, double y) {
    if (!(c > 1.0)) throw std::invalid_argument("payoff_transform: c must be > 1");
    if (!(A > 0.0)) throw std::invalid_argument("payoff_transform: A must be > 0");
    cdouble ciy(c, y);
    cdouble expo = (1.0 - c - cdouble(0.0, y)) * std::log(A);
    return std::exp(expo) / (ciy * (ciy - 1.0));
}

namespace detail {

// Per-pricing cache of the s-quadrature: fixed Gauss-Legendre nodes over
// [t,T] (panelized at tabulated-kernel knots) with both effective kernels
// evaluated once. Every y-evaluation of the joint exponent reuses them.
struct SGrid {
    std::vector<double> w;   // node weights (already scaled by panel width)
    std::vector<double> g;   // vol1 * g(T, s_i)
    std::vector<double> h;   // vol2 * h(T, s_i)

    SGrid(const SpotModelSpec& m1, const SpotModelSpec& m2, double t, double T, int n = 64) {
        if (!(T >= t)) throw std::invalid_argument("pricing: maturity before valuation time");
        if (T == t) return;
        std::vector<double> edges{t};
        for (const KernelSpec* k : {&m1.kernel, &m2.kernel})
            for (double s : s_knots(*k, t, T)) edges.push_back(s);
        edges.push_back(T);
        std::sort(edges.begin(), edges.end());
        KernelSpec k1 = m1.effective_kernel();
        KernelSpec k2 = m2.effective_kernel();
        const QuadRule& rule = gauss_legendre_rule(n);
        for (std::size_t e = 1; e < edges.size(); ++e) {
            double lo = edges[e - 1], hi = edges[e];
            if (!(hi > lo)) continue;
            int parts = std::max(1, static_cast<int>(std::ceil(hi - lo)));
            for (int p = 0; p < parts; ++p) {
                double a = lo + (hi - lo) * p / parts;
                double b = lo + (hi - lo) * (p + 1) / parts;
                double half = 0.5 * (b - a), mid = 0.5 * (a + b);
                for (int j = 0; j < n; ++j) {
                    double s = mid + half * rule.x[j];
                    w.push_back(half * rule.w[j]);
                    g.push_back(k1.eval(T, s));
                    h.push_back(k2.eval(T, s));
                }
            }
        }
    }

    // int_t^T psi((y - ic) g, ((c-1)i - y) h) ds
    cdouble ln_psi_joint(const BivariateLevySpec& levy, double c, double y) const {
        cdouble a1(y, -c);
        cdouble a2(-y, c - 1.0);
        KahanSum re, im;
        for (std::size_t i = 0; i < w.size(); ++i) {
            cdouble v = levy.cumulant(a1 * g[i], a2 * h[i]);
            re.add(w[i] * v.real());
            im.add(w[i] * v.imag());
        }
        return {re.value(), im.value()};
    }

    double moment(const std::vector<double>& a, const std::vector<double>& b) const {
        KahanSum s;
        for (std::size_t i = 0; i < w.size(); ++i) s.add(w[i] * a[i] * b[i]);
        return s.value();
    }
};

// Large-y magnitude bound for the joint exponential factor,
// |Psi(y)| <= B0 exp(-q y^2 / 2): the y-independent part of Re psi integrates
// to ln B0 and the Brownian quadratic form supplies the decay rate q.
struct PsiBound {
    double ln_b0 = 0.0;
    double q = 0.0;

    PsiBound(const BivariateLevySpec& levy, const SGrid& sg, double c) {
        if (levy.kind() == BivariateLevySpec::Kind::Custom) {
            // no parametric access; keep a flat bound and let the f-hat tail rule
            ln_b0 = 0.0;
            q = 0.0;
            return;
        }
        KahanSum b0, qq;
        const double c1 = levy.c1(), c2 = levy.c2(), rho = levy.rho();
        for (std::size_t i = 0; i < sg.w.size(); ++i) {
            double gi = sg.g[i], hi = sg.h[i];
            double v1 = c * c1 * gi;
            double v2 = (c - 1.0) * c2 * hi;
            double r = c * gi * levy.gamma1() + (1.0 - c) * hi * levy.gamma2() +
                       0.5 * (v1 * v1 - 2.0 * rho * v1 * v2 + v2 * v2);
            if (levy.has_jumps()) {
                double u1 = c * gi;
                double u2 = (c - 1.0) * hi;
                double jconst = u1 * levy.jump_mean1() - u2 * levy.jump_mean2() +
                                0.5 * (u1 * u1 * levy.jump_cov11() -
                                       2.0 * u1 * u2 * levy.jump_cov12() +
                                       u2 * u2 * levy.jump_cov22());
                r += levy.lambda() * (std::exp(jconst) - 1.0);
            }
            b0.add(sg.w[i] * r);
            qq.add(sg.w[i] * (c1 * c1 * gi * gi - 2.0 * rho * c1 * c2 * gi * hi + c2 * c2 * hi * hi));
        }
        ln_b0 = b0.value();
        q = std::max(0.0, qq.value());
    }
};

// Everything a spread-price integration needs, assembled once per call.
struct PriceContext {
    double tau, lam1, lam2, A, c;
    double x1, x2;        // ln(f_i / L_i) - ln Psi_i
    double prefactor;     // e^{-r tau} L1 / pi, for the folded one-sided integral
    double s0;            // A^{1-c} e^{c x1 + (1-c) x2}
    double omega;         // oscillation frequency x1 - x2 - ln A
    double f1, f2;
    const BivariateLevySpec* levy;
    SGrid sgrid;
    PsiBound bound;

    PriceContext(const MarketSnapshot& snap, const SpotModelSpec& m1, const SpotModelSpec& m2,
                 const BivariateLevySpec& lv, const OptionTerms& terms, const DampingConfig& damp)
        : c(damp.c),
          f1(snap.f1),
          f2(snap.f2),
          levy(&lv),
          sgrid(m1, m2, snap.t, terms.maturity),
          bound(lv, sgrid, damp.c) {
        if (snap.maturity != terms.maturity)
            throw std::invalid_argument("pricing: snapshot maturity differs from option maturity");
        tau = terms.maturity - snap.t;
        lam1 = m1.seasonality.value(terms.maturity);
        lam2 = m2.seasonality.value(terms.maturity);
        A = terms.heat_rate * lam2 / lam1;
        x1 = std::log(snap.f1 / lam1) - log_psi_marginal(m1, lv, Leg::first, snap.t, terms.maturity);
        x2 = std::log(snap.f2 / lam2) - log_psi_marginal(m2, lv, Leg::second, snap.t, terms.maturity);
        prefactor = std::exp(-terms.rate * tau) * lam1 / pi;
        s0 = std::pow(A, 1.0 - c) * std::exp(c * x1 + (1.0 - c) * x2);
        omega = x1 - x2 - std::log(A);

        // the exponential moments sit on the strip swept by the damped arguments
        double glo = 0.0, ghi = 0.0, hlo = 0.0, hhi = 0.0;
        for (std::size_t i = 0; i < sgrid.g.size(); ++i) {
            glo = std::min(glo, sgrid.g[i]);
            ghi = std::max(ghi, sgrid.g[i]);
            hlo = std::min(hlo, sgrid.h[i]);
            hhi = std::max(hhi, sgrid.h[i]);
        }
        double lo = std::min(-c * ghi, (c - 1.0) * hlo);
        double hi = std::max(-c * glo, (c - 1.0) * hhi);
        if (!lv.analyticity_check(std::min(lo, 0.0), std::max(hi, 0.0)))
            throw NumericsError("pricing: cumulant not analytic on the damping strip");
    }

    // integrand at y >= 0 before the prefactor; price column from
    //   s0 e^{i y omega} / ((c+iy)(c+iy-1)) exp(ln Psi_joint(y))
    cdouble integrand(double y) const {
        cdouble ciy(c, y);
        cdouble osc(0.0, y * omega);
        cdouble lp = sgrid.ln_psi_joint(*levy, c, y);
        return s0 * std::exp(osc + lp) / (ciy * (ciy - 1.0));
    }

    // pointwise magnitude bound used for truncation control
    double tail_bound(double y) const {
        double b = s0 * std::exp(bound.ln_b0 - 0.5 * bound.q * y * y) / std::max(y * y, 1.0);
        return prefactor * b;
    }

    double pick_y_max(const QuadratureSpec& quad, double extra_growth) const {
        if (quad.y_max > 0.0) return quad.y_max;
        double target = 0.1 * std::max(quad.abs_tol, 1e-14);
        double y = 16.0;
        while (y < 1e6 && tail_bound(y) * (1.0 + extra_growth * y) > target) y *= 2.0;
        return y;
    }
};

enum class IntegrandKind { price, dprice_df1, dprice_df2 };

// unit_scale converts the caller's absolute tolerance (price units) into the
// raw spectral-integral units used here.
template <class Ctx>
AdaptiveOutcome<cdouble> integrate_spectrum(const Ctx& ctx, IntegrandKind kind, double y_max,
                                            const QuadratureSpec& quad, double unit_scale,
                                            std::vector<QuadNode<cdouble>>* record = nullptr) {
    auto f = [&](double y) -> cdouble {
        cdouble base = ctx.integrand(y);
        switch (kind) {
            case IntegrandKind::price:
                return base;
            case IntegrandKind::dprice_df1:
                return base * cdouble(ctx.c, y);
            case IntegrandKind::dprice_df2:
                return base * (1.0 - cdouble(ctx.c, y));
        }
        return base;
    };
    // geometric pre-panels keep the adaptive pass from wasting depth on the
    // long, numerically empty tail
    std::vector<double> edges{0.0};
    double e = 1.0;
    while (e < y_max) {
        edges.push_back(e);
        e *= 2.0;
    }
    edges.push_back(y_max);
    AdaptiveOutcome<cdouble> total;
    double panel_tol = std::max(quad.abs_tol / std::max(unit_scale, 1e-300), 1e-16) /
                       static_cast<double>(edges.size());
    for (std::size_t i = 1; i < edges.size(); ++i) {
        auto part = adaptive_gk(f, edges[i - 1], edges[i], panel_tol, quad.rel_tol,
                                quad.max_subdivisions, record);
        total.value += part.value;
        total.err_est += part.err_est;
        total.panels += part.panels;
        total.converged = total.converged && part.converged;
    }
    return total;
}

}  // namespace detail

// int_t^T psi((y-ic) g~(T,s), ((c-1)i - y) h~(T,s)) ds, exponentiated: the
// joint conditional characteristic factor of the damped payoff representation.
inline cdouble psi_factor(const BivariateLevySpec& levy, const SpotModelSpec& m1,
                          const SpotModelSpec& m2, double c, double t, double T, double y) {
    detail::SGrid sg(m1, m2, t, T);
    return std::exp(sg.ln_psi_joint(levy, c, y));
}

struct PriceResult {
    double price;
    double abs_err_est;
};

// Spread option on two forwards: C = e^{-r tau} E[(S1(T) - k S2(T))^+ | F_t],
// computed from the damped-payoff Fourier representation with the state read
// off the observed forwards. The integral is folded onto y >= 0 through the
// Hermitian symmetry of the integrand.
inline PriceResult price_spread(const MarketSnapshot& snap, const SpotModelSpec& m1,
                                const SpotModelSpec& m2, const BivariateLevySpec& levy,
                                const OptionTerms& terms, const DampingConfig& damp = {},
                                const QuadratureSpec& quad = {}) {
    using namespace detail;
    if (snap.t == terms.maturity) {
        double intrinsic = std::max(snap.f1 - terms.heat_rate * snap.f2, 0.0);
        return {intrinsic, 0.0};
    }
    PriceContext ctx(snap, m1, m2, levy, terms, damp);
    double y_max = ctx.pick_y_max(quad, 0.0);
    auto out = integrate_spectrum(ctx, IntegrandKind::price, y_max, quad, ctx.prefactor);
    if (!out.converged)
        throw NumericsError("pricing: quadrature budget exhausted, achieved error ~" +
                            std::to_string(ctx.prefactor * out.err_est));
    double price = ctx.prefactor * out.value.real();
    double err = ctx.prefactor * out.err_est + ctx.tail_bound(y_max) * y_max;

    const double df = std::exp(-terms.rate * ctx.tau);
    double lb = df * std::max(snap.f1 - terms.heat_rate * snap.f2, 0.0);
    double ub = df * snap.f1;
    double band_tol = std::max(quad.abs_tol, 10.0 * err);
    if (price < lb - band_tol || price > ub + band_tol)
        throw NumericsError("pricing: result violates the arbitrage band beyond tolerance");
    price = std::min(std::max(price, lb), ub);
    return {price, err};
}

struct Greeks {
    double df1;
    double df2;
};

// Forward deltas by differentiating under the integral sign; the spectral
// factors are (iy+c)/f1 and (1-(iy+c))/f2.
inline Greeks greeks(const MarketSnapshot& snap, const SpotModelSpec& m1, const SpotModelSpec& m2,
                     const BivariateLevySpec& levy, const OptionTerms& terms,
                     const DampingConfig& damp = {}, const QuadratureSpec& quad = {}) {
    using namespace detail;
    PriceContext ctx(snap, m1, m2, levy, terms, damp);
    double y_max = ctx.pick_y_max(quad, 1.0 / std::min({snap.f1, snap.f2, 1.0}));
    auto d1 = integrate_spectrum(ctx, IntegrandKind::dprice_df1, y_max, quad, ctx.prefactor);
    auto d2 = integrate_spectrum(ctx, IntegrandKind::dprice_df2, y_max, quad, ctx.prefactor);
    if (!d1.converged || !d2.converged)
        throw NumericsError("greeks: quadrature budget exhausted");
    return {ctx.prefactor * d1.value.real() / snap.f1, ctx.prefactor * d2.value.real() / snap.f2};
}

// Reusable spectral grid at a fixed snapshot: price and deltas at forwards
// (f1 e^{u1}, f2 e^{u2}) come from the recorded nodes, since the state shift
// enters the integrand only through e^{c u1 + (1-c) u2} e^{i y (u1 - u2)}.
class PriceSurface {
public:
    PriceSurface(const MarketSnapshot& snap, const SpotModelSpec& m1, const SpotModelSpec& m2,
                 const BivariateLevySpec& levy, const OptionTerms& terms,
                 const DampingConfig& damp = {}, QuadratureSpec quad = {})
        : ctx_(snap, m1, m2, levy, terms, damp) {
        quad.abs_tol *= 1e-2;  // headroom: the grid is reused away from the base point
        double y_max = ctx_.pick_y_max(quad, 1.0 / std::min({snap.f1, snap.f2, 1.0}));
        auto out = detail::integrate_spectrum(ctx_, detail::IntegrandKind::price, y_max, quad,
                                              ctx_.prefactor, &nodes_);
        if (!out.converged) throw NumericsError("price surface: quadrature budget exhausted");
        base_price_ = ctx_.prefactor * out.value.real();
        err_ = ctx_.prefactor * out.err_est;
    }

    double base_price() const { return base_price_; }
    double err_est() const { return err_; }

    double price_at(double f1, double f2) const {
        auto [u1, u2] = shift_of(f1, f2);
        double scale = std::exp(ctx_.c * u1 + (1.0 - ctx_.c) * u2);
        double w = u1 - u2;
        KahanSum acc;
        for (const auto& nd : nodes_)
            acc.add(nd.w * (nd.f * std::exp(cdouble(0.0, nd.x * w))).real());
        return ctx_.prefactor * scale * acc.value();
    }

    Greeks greeks_at(double f1, double f2) const {
        auto [u1, u2] = shift_of(f1, f2);
        double scale = std::exp(ctx_.c * u1 + (1.0 - ctx_.c) * u2);
        double w = u1 - u2;
        KahanSum a1, a2;
        for (const auto& nd : nodes_) {
            cdouble v = nd.f * std::exp(cdouble(0.0, nd.x * w));
            a1.add(nd.w * (v * cdouble(ctx_.c, nd.x)).real());
            a2.add(nd.w * (v * (1.0 - cdouble(ctx_.c, nd.x))).real());
        }
        return {ctx_.prefactor * scale * a1.value() / f1, ctx_.prefactor * scale * a2.value() / f2};
    }

private:
    std::pair<double, double> shift_of(double f1, double f2) const {
        if (!(f1 > 0.0) || !(f2 > 0.0))
            throw std::invalid_argument("price surface: forwards must be > 0");
        return {std::log(f1 / ctx_.f1), std::log(f2 / ctx_.f2)};
    }

    detail::PriceContext ctx_;
    std::vector<QuadNode<cdouble>> nodes_;
    double base_price_;
    double err_;
};

// sqrt of int_t^T { g1^2 - 2 rho g1 g2 + g2^2 } ds for two effective kernels.
inline double total_vol(const KernelSpec& k1, const KernelSpec& k2, double rho, double t,
                        double T) {
    std::vector<double> knots;
    for (const KernelSpec* k : {&k1, &k2})
        for (double lag : k->knots()) {
            double s = T - lag;
            if (s > t && s < T) knots.push_back(s);
        }
    auto f = [&](double s) {
        double a = k1.eval(T, s), b = k2.eval(T, s);
        return a * a - 2.0 * rho * a * b + b * b;
    };
    double v = panelized_gauss_legendre(f, t, T, knots);
    return std::sqrt(std::max(v, 0.0));
}

// Deterministic-total-vol exchange price on forwards.
inline double margrabe_price(double f1, double f2, double k, double sigma_total, double r, double t,
                             double T) {
    if (!(f1 > 0.0) || !(f2 > 0.0)) throw std::invalid_argument("margrabe: forwards must be > 0");
    if (!(k > 0.0)) throw std::invalid_argument("margrabe: heat rate must be > 0");
    if (!(sigma_total >= 0.0)) throw std::invalid_argument("margrabe: total vol must be >= 0");
    double df = std::exp(-r * (T - t));
    if (sigma_total == 0.0) return df * std::max(f1 - k * f2, 0.0);
    double d2 = (std::log(f1 / f2) - std::log(k) - 0.5 * sigma_total * sigma_total) / sigma_total;
    double d1 = d2 + sigma_total;
    return df * (f1 * norm_cdf(d1) - k * f2 * norm_cdf(d2));
}

// Gaussian-driver total vol with the Brownian scales folded into the kernels.
inline double gaussian_total_vol(const SpotModelSpec& m1, const SpotModelSpec& m2,
                                 const BivariateLevySpec& levy, double t, double T) {
    return total_vol(m1.effective_kernel().scaled(levy.c1()),
                     m2.effective_kernel().scaled(levy.c2()), levy.rho(), t, T);
}

// Randomized-total-vol exchange price: plain average of the deterministic
// formula over sampled total vols (volatility paths independent of the
// Gaussian driver).
inline McEstimate margrabe_stochastic_vol(double f1, double f2, double k, double r, double t,
                                          double T,
                                          const std::function<double(std::uint64_t)>& vol_sampler,
                                          std::int64_t n_samples, std::uint64_t seed) {
    if (n_samples <= 0) throw std::invalid_argument("margrabe_stochastic_vol: need n_samples > 0");
    std::vector<double> vals(static_cast<std::size_t>(n_samples));
    for (std::int64_t i = 0; i < n_samples; ++i)
        vals[static_cast<std::size_t>(i)] = margrabe_price(f1, f2, k, vol_sampler(i), r, t, T);
    double mean = pairwise_sum(vals) / static_cast<double>(n_samples);
    double var = 0.0;
    for (double v : vals) var += sq(v - mean);
    var /= std::max<std::int64_t>(n_samples - 1, 1);
    return {mean, std::sqrt(var / static_cast<double>(n_samples)), n_samples, seed};
}

}
