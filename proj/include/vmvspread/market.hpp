#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "levy.hpp"
#include "quadrature.hpp"

namespace vmvspread {

// Deterministic seasonal level, log-additive so it can never go negative:
//   Constant   L(t) = level
//   TrendSine  L(t) = level * exp(slope t + amplitude sin(2 pi (t - phase)/period))
class SeasonalitySpec {
public:
    enum class Kind { Constant, TrendSine };

    static SeasonalitySpec constant(double level) {
        if (!(level > 0.0)) throw std::invalid_argument("seasonality: level must be > 0");
        SeasonalitySpec s;
        s.level_ = level;
        return s;
    }

    static SeasonalitySpec trend_sine(double level, double slope, double amplitude, double period,
                                      double phase) {
        if (!(level > 0.0)) throw std::invalid_argument("seasonality: level must be > 0");
        if (!(period > 0.0)) throw std::invalid_argument("seasonality: period must be > 0");
        SeasonalitySpec s;
        s.kind_ = Kind::TrendSine;
        s.level_ = level;
        s.slope_ = slope;
        s.amplitude_ = amplitude;
        s.period_ = period;
        s.phase_ = phase;
        return s;
    }

    Kind kind() const { return kind_; }
    double level() const { return level_; }

    double value(double t) const {
        if (kind_ == Kind::Constant) return level_;
        return level_ * std::exp(slope_ * t +
                                 amplitude_ * std::sin(2.0 * pi * (t - phase_) / period_));
    }

private:
    Kind kind_ = Kind::Constant;
    double level_ = 1.0;
    double slope_ = 0.0, amplitude_ = 0.0, period_ = 1.0, phase_ = 0.0;
};

// One spot leg: ln S(t) = ln L(t) + X(t), X a Volterra integral of the driver
// with deterministic kernel and a constant spot volatility folded into it.
struct SpotModelSpec {
    SeasonalitySpec seasonality;
    KernelSpec kernel;
    double vol = 1.0;

    SpotModelSpec(SeasonalitySpec seas, KernelSpec k, double v)
        : seasonality(std::move(seas)), kernel(std::move(k)), vol(v) {
        if (!(vol > 0.0)) throw std::invalid_argument("spot model: vol must be > 0");
    }

    KernelSpec effective_kernel() const { return kernel.scaled(vol); }
};

enum class Leg { first, second };

// Observed state at valuation time: both forward prices for the option maturity.
struct MarketSnapshot {
    double t;
    double f1;
    double f2;
    double maturity;

    MarketSnapshot(double t_, double f1_, double f2_, double maturity_)
        : t(t_), f1(f1_), f2(f2_), maturity(maturity_) {
        if (!(f1 > 0.0) || !(f2 > 0.0))
            throw std::invalid_argument("snapshot: forwards must be > 0");
        if (!(t <= maturity)) throw std::invalid_argument("snapshot: t must be <= maturity");
    }
};

namespace detail {

inline std::vector<double> s_knots(const KernelSpec& k, double t, double T) {
    std::vector<double> out;
    for (double lag : k.knots()) {
        double s = T - lag;
        if (s > t && s < T) out.push_back(s);
    }
    return out;
}

}  // namespace detail

// ln Psi for one leg: int_t^T psi_leg(-i vol g(T,s)) ds. This is the
// log of the conditional exponential moment that links forwards to the spot
// state; real by construction since psi at -i x is a log moment.
inline double log_psi_marginal(const SpotModelSpec& model, const BivariateLevySpec& levy, Leg leg,
                               double t, double T) {
    if (!(t <= T)) throw std::invalid_argument("log_psi_marginal: t must be <= T");
    KernelSpec g = model.effective_kernel();
    auto integrand = [&](double s) {
        cdouble z(0.0, -g.eval(T, s));
        cdouble v = (leg == Leg::first) ? levy.marginal_cumulant_u(z) : levy.marginal_cumulant_v(z);
        return v.real();
    };
    return panelized_gauss_legendre(integrand, t, T, detail::s_knots(model.kernel, t, T));
}

// f(t,T) = L(T) exp(seasoned_integral) exp(ln Psi), always positive.
inline double forward_price(const SpotModelSpec& model, const BivariateLevySpec& levy, Leg leg,
                            double t, double T, double seasoned_integral) {
    return model.seasonality.value(T) *
           std::exp(seasoned_integral + log_psi_marginal(model, levy, leg, t, T));
}

// Recovers the seasoned integral consistent with an observed forward.
inline double invert_forward(const SpotModelSpec& model, const BivariateLevySpec& levy, Leg leg,
                             double t, double T, double observed_forward) {
    if (!(observed_forward > 0.0))
        throw std::invalid_argument("invert_forward: forward must be > 0");
    return std::log(observed_forward / model.seasonality.value(T)) -
           log_psi_marginal(model, levy, leg, t, T);
}

struct ExpMomentCheck {
    bool ok;
    double tail_l2;  // remaining squared-kernel mass; infinite when divergent
    std::string reason;
};

// Whether the stationary exponential moment behind the forward representation
// exists. For the built-in drivers (entire cumulants, exponential moments of
// all orders) this reduces to square-integrability of the kernel; constant
// kernels are only admissible in finite-window setups where the state comes
// from observed forwards.
inline ExpMomentCheck verify_exp_moment(const SpotModelSpec& model, const BivariateLevySpec& levy,
                                        Leg leg, double T) {
    (void)leg;
    (void)T;
    if (!model.kernel.square_integrable())
        return {false, std::numeric_limits<double>::infinity(),
                "constant kernel: infinite-history integral diverges"};
    if (levy.kind() == BivariateLevySpec::Kind::Custom && !levy.analyticity_check(-1.0, 1.0))
        return {false, std::numeric_limits<double>::infinity(),
                "custom driver: analyticity strip too narrow for exponential moments"};
    return {true, model.effective_kernel().l2_tail(0.0), ""};
}

}
