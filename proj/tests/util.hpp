#pragma once

// Shared fixtures: one hand-picked two-leg market plus random scenario
// generators used by the pricing, hedging and acceptance suites.

#include <random>

#include <vmvspread/vmvspread.hpp>

namespace tv {

using namespace vmvspread;

inline SpotModelSpec ref_spot1() {
    return {SeasonalitySpec::constant(20.0), KernelSpec::ou(1.0, 1.5), 0.4};
}

inline SpotModelSpec ref_spot2() {
    return {SeasonalitySpec::constant(18.0), KernelSpec::ou(1.0, 1.0), 0.3};
}

inline MarketSnapshot ref_snap() { return {0.0, 21.0, 19.0, 0.75}; }

inline OptionTerms ref_terms() { return {0.75, 1.0, 0.02}; }

inline BivariateLevySpec ref_gauss() {
    return BivariateLevySpec::gaussian(0.0, 0.0, 1.0, 1.0, 0.3);
}

inline BivariateLevySpec ref_merton() {
    return BivariateLevySpec::merton(0.0, 0.0, 0.8, 0.7, 0.4, 0.5, -0.1, 0.05, 0.04, 0.01, 0.03);
}

struct TestScenario {
    SpotModelSpec m1, m2;
    BivariateLevySpec levy;
    MarketSnapshot snap;
    OptionTerms terms;
};

// kind 0: constant, 1: OU, 2: CARMA(2,1) with eigenvalues drawn in (-3,-0.5)
inline KernelSpec pick_kernel(std::mt19937_64& rng, int kind) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    switch (((kind % 3) + 3) % 3) {
        case 0:
            return KernelSpec::constant(1.0);
        case 1:
            return KernelSpec::ou(1.0, 0.5 + 1.5 * u(rng));
        default: {
            double l1 = 0.5 + u(rng), l2 = 1.5 + 1.5 * u(rng);
            double b0 = 0.3 + 0.5 * u(rng);
            return KernelSpec::carma({l1 + l2, l1 * l2}, {b0}, 1.0);
        }
    }
}

inline TestScenario random_gaussian_scenario(std::mt19937_64& rng, int kernel_kind, double rho) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double lam1 = 15.0 + 20.0 * u(rng), lam2 = 12.0 + 20.0 * u(rng);
    SpotModelSpec m1{SeasonalitySpec::constant(lam1), pick_kernel(rng, kernel_kind),
                     0.2 + 0.4 * u(rng)};
    SpotModelSpec m2{SeasonalitySpec::constant(lam2), pick_kernel(rng, kernel_kind + 1),
                     0.15 + 0.35 * u(rng)};
    double T = 0.3 + 1.2 * u(rng);
    double t = u(rng) < 0.5 ? 0.0 : 0.2 * T;
    double f1 = lam1 * (0.9 + 0.2 * u(rng));
    double f2 = lam2 * (0.9 + 0.2 * u(rng));
    double k = f1 / f2 * (0.75 + 0.5 * u(rng));
    double r = 0.05 * u(rng);
    return {std::move(m1),
            std::move(m2),
            BivariateLevySpec::gaussian(0.0, 0.0, 1.0, 1.0, rho),
            MarketSnapshot{t, f1, f2, T},
            OptionTerms{T, k, r}};
}

inline TestScenario random_merton_scenario(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TestScenario s = random_gaussian_scenario(rng, static_cast<int>(rng() % 3),
                                              -0.6 + 1.2 * u(rng));
    double c1 = 0.5 + 0.5 * u(rng), c2 = 0.5 + 0.5 * u(rng);
    double lam = 0.2 + 0.8 * u(rng);
    double mu1 = -0.15 + 0.25 * u(rng), mu2 = -0.1 + 0.2 * u(rng);
    double s11 = 0.01 + 0.05 * u(rng), s22 = 0.01 + 0.04 * u(rng);
    double s12 = (-0.8 + 1.6 * u(rng)) * std::sqrt(s11 * s22);
    s.levy = BivariateLevySpec::merton(0.0, 0.0, c1, c2, s.levy.rho(), lam, mu1, mu2, s11, s12,
                                       s22);
    return s;
}

inline double margrabe_ref(const TestScenario& s) {
    double sig = gaussian_total_vol(s.m1, s.m2, s.levy, s.snap.t, s.terms.maturity);
    return margrabe_price(s.snap.f1, s.snap.f2, s.terms.heat_rate, sig, s.terms.rate, s.snap.t,
                          s.terms.maturity);
}

}  // namespace tv
