#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "util.hpp"

using namespace vmvspread;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("seasonal levels") {
    auto flat = SeasonalitySpec::constant(30.0);
    for (double t : {0.0, 1.7, 12.0}) CHECK(flat.value(t) == 30.0);

    auto trend = SeasonalitySpec::trend_sine(30.0, 0.1, 0.0, 1.0, 0.0);
    CHECK_THAT(trend.value(2.0), WithinRel(30.0 * std::exp(0.2), 1e-14));

    // sine peak sits a quarter period after the phase origin
    auto seasonal = SeasonalitySpec::trend_sine(25.0, 0.1, 0.8, 1.0, 0.3);
    double t_peak = 0.3 + 0.25;
    CHECK_THAT(seasonal.value(t_peak),
               WithinRel(25.0 * std::exp(0.1 * t_peak) * std::exp(0.8), 1e-13));

    CHECK_THROWS_AS(SeasonalitySpec::constant(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(SeasonalitySpec::trend_sine(10.0, 0.0, 1.0, 0.0, 0.0),
                    std::invalid_argument);
}

TEST_CASE("log psi marginal closed forms") {
    auto levy = BivariateLevySpec::gaussian(0.0, 0.0, 1.0, 1.0, 0.0);

    SpotModelSpec flat{SeasonalitySpec::constant(10.0), KernelSpec::constant(1.0), 0.2};
    CHECK_THAT(log_psi_marginal(flat, levy, Leg::first, 0.0, 1.0), WithinRel(0.02, 1e-12));
    CHECK(log_psi_marginal(flat, levy, Leg::first, 1.0, 1.0) == 0.0);

    SpotModelSpec ou{SeasonalitySpec::constant(10.0), KernelSpec::ou(1.0, 1.0), 1.0};
    CHECK_THAT(log_psi_marginal(ou, levy, Leg::first, 0.0, 1.0),
               WithinRel(0.25 * (1.0 - std::exp(-2.0)), 1e-12));
}

TEST_CASE("log psi marginal matches an independent quadrature for jump drivers") {
    auto levy = tv::ref_merton();
    SpotModelSpec ou{SeasonalitySpec::constant(10.0), KernelSpec::ou(1.0, 1.3), 0.5};
    double t = 0.2, T = 1.1;

    // composite Simpson on a fine grid as the oracle
    const int n = 4000;
    double h = (T - t) / n, acc = 0.0;
    auto f = [&](double s) {
        return levy.marginal_cumulant_u(cdouble(0.0, -0.5 * std::exp(-1.3 * (T - s)))).real();
    };
    for (int i = 0; i <= n; ++i) {
        double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * f(t + i * h);
    }
    acc *= h / 3.0;
    CHECK_THAT(log_psi_marginal(ou, levy, Leg::first, t, T), WithinRel(acc, 1e-10));
}

TEST_CASE("forward price composition") {
    auto levy = BivariateLevySpec::gaussian(0.0, 0.0, 1.0, 1.0, 0.0);
    SpotModelSpec ou{SeasonalitySpec::constant(22.0), KernelSpec::ou(1.0, 1.4), 1.0};

    // at delivery the forward is the spot itself
    double x = 0.31;
    CHECK_THAT(forward_price(ou, levy, Leg::first, 2.0, 2.0, x),
               WithinRel(22.0 * std::exp(x), 1e-13));

    // zero seasoned state: pure psi factor
    double T = 1.5, alpha = 1.4;
    double expect = 22.0 * std::exp(0.25 * (1.0 - std::exp(-2.0 * alpha * T)) / alpha);
    CHECK_THAT(forward_price(ou, levy, Leg::first, 0.0, T, 0.0), WithinRel(expect, 1e-12));
}

TEST_CASE("forward inversion round trip") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        auto s = (i % 2) ? tv::random_merton_scenario(rng)
                         : tv::random_gaussian_scenario(rng, i, -0.5 + u(rng));
        for (Leg leg : {Leg::first, Leg::second}) {
            const SpotModelSpec& m = (leg == Leg::first) ? s.m1 : s.m2;
            double f = (leg == Leg::first) ? s.snap.f1 : s.snap.f2;
            double x = invert_forward(m, s.levy, leg, s.snap.t, s.terms.maturity, f);
            double back = forward_price(m, s.levy, leg, s.snap.t, s.terms.maturity, x);
            CHECK_THAT(back, WithinRel(f, 1e-12));
            CHECK(back > 0.0);
        }
    }
}

TEST_CASE("inversion special points") {
    auto levy = tv::ref_gauss();
    SpotModelSpec m = tv::ref_spot1();
    double t = 0.1, T = 0.9;

    double psi_forward = m.seasonality.value(T) *
                         std::exp(log_psi_marginal(m, levy, Leg::first, t, T));
    CHECK_THAT(invert_forward(m, levy, Leg::first, t, T, psi_forward), WithinAbs(0.0, 1e-13));

    double spot = 24.0;
    CHECK_THAT(invert_forward(m, levy, Leg::first, T, T, spot),
               WithinRel(std::log(spot / m.seasonality.value(T)), 1e-13));

    CHECK_THROWS_AS(invert_forward(m, levy, Leg::first, t, T, -3.0), std::invalid_argument);
}

TEST_CASE("exponential moment guard") {
    auto gauss = tv::ref_gauss();
    SpotModelSpec ou = tv::ref_spot1();
    CHECK(verify_exp_moment(ou, gauss, Leg::first, 1.0).ok);

    SpotModelSpec flat{SeasonalitySpec::constant(20.0), KernelSpec::constant(1.0), 0.3};
    auto bad = verify_exp_moment(flat, gauss, Leg::first, 1.0);
    CHECK_FALSE(bad.ok);
    CHECK(std::isinf(bad.tail_l2));
    CHECK_FALSE(bad.reason.empty());

    SpotModelSpec carma{SeasonalitySpec::constant(20.0),
                        KernelSpec::carma({3.0, 2.0}, {0.5}, 1.0), 0.4};
    CHECK(verify_exp_moment(carma, tv::ref_merton(), Leg::second, 2.0).ok);
}

TEST_CASE("snapshot validation") {
    CHECK_THROWS_AS(MarketSnapshot(0.0, -1.0, 19.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(MarketSnapshot(0.0, 21.0, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(MarketSnapshot(2.0, 21.0, 19.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(SpotModelSpec(SeasonalitySpec::constant(20.0), KernelSpec::constant(1.0), 0.0),
                    std::invalid_argument);
}
