#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "kernels.hpp"
#include "levy.hpp"
#include "market.hpp"
#include "math.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace vmvspread {

// Uniform time grid over [t0, T] plus optional warmup steps reaching back to
// t0 - warmup_steps*dt. Steps are indexed backwards from maturity: step j
// covers [T-(j+1)dt, T-j*dt]. Draws are keyed by this index, so enlarging the
// warmup only appends new early steps and never reshuffles existing draws.
struct SimulationGrid {
    double t0;
    double T;
    double dt;
    int n_steps;
    int warmup_steps;

    static SimulationGrid make(double t0, double T, int n_steps, double warmup_horizon = 0.0) {
        if (!(T > t0)) throw std::invalid_argument("grid: need T > t0");
        if (n_steps < 1) throw std::invalid_argument("grid: need n_steps >= 1");
        SimulationGrid g;
        g.t0 = t0;
        g.T = T;
        g.n_steps = n_steps;
        g.dt = (T - t0) / n_steps;
        g.warmup_steps =
            warmup_horizon > 0.0 ? static_cast<int>(std::ceil(warmup_horizon / g.dt - 1e-9)) : 0;
        return g;
    }

    int total_steps() const { return n_steps + warmup_steps; }
    double start() const { return t0 - warmup_steps * dt; }
    double left_time(int j) const { return T - (j + 1) * dt; }
};

// Smallest horizon H with l2_tail(H) <= eps for every kernel, by doubling.
// Constant kernels run in finite-window mode and need no warmup.
inline double choose_warmup(const std::vector<const KernelSpec*>& kernels, double eps = 1e-8) {
    double h = 0.0;
    for (const KernelSpec* k : kernels) {
        if (!k->square_integrable()) continue;
        double hk = 0.25;
        while (k->l2_tail(hk) > eps) {
            hk *= 2.0;
            if (hk > 1e6) throw NumericsError("warmup: kernel tail decays too slowly to truncate");
        }
        h = std::max(h, hk);
    }
    return h;
}

// Square volatility as an OU process pulled down at rate lambda_mr and pushed
// up by a compound-Poisson subordinator with exponential jump sizes.
struct BnsVolSpec {
    double lambda_mr;
    double jump_rate;
    double jump_mean;
    double sigma0_sq = 0.0;  // ignored when stationary_start
    bool stationary_start = false;

    BnsVolSpec(double lambda_mr_, double jump_rate_, double jump_mean_, double sigma0_sq_,
               bool stationary = false)
        : lambda_mr(lambda_mr_),
          jump_rate(jump_rate_),
          jump_mean(jump_mean_),
          sigma0_sq(sigma0_sq_),
          stationary_start(stationary) {
        if (!(lambda_mr > 0.0)) throw std::invalid_argument("bns: mean reversion must be > 0");
        if (!(jump_rate >= 0.0)) throw std::invalid_argument("bns: jump rate must be >= 0");
        if (!(jump_mean >= 0.0)) throw std::invalid_argument("bns: jump mean must be >= 0");
        if (jump_rate > 0.0 && !(jump_mean > 0.0))
            throw std::invalid_argument("bns: positive jump rate needs positive jump mean");
        if (!stationary && !(sigma0_sq > 0.0))
            throw std::invalid_argument("bns: initial variance must be > 0");
        if (stationary && !(jump_rate > 0.0))
            throw std::invalid_argument("bns: stationary start needs a nondegenerate subordinator");
    }

    double stationary_shape() const { return jump_rate / lambda_mr; }
    double stationary_mean() const { return jump_rate * jump_mean / lambda_mr; }
};

enum class VolMode { deterministic, bns };

struct McConfig {
    int steps_per_year = 256;
    int min_steps = 64;
    int hedge_fine_steps = 512;
    double eps_trunc = 1e-8;
    double warmup_horizon = -1.0;  // < 0: choose automatically from eps_trunc
    int n_threads = 0;             // 0: hardware count, capped by VMVSPREAD_THREADS
};

namespace detail {

inline int resolve_threads(int requested) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    int limit = hw;
    if (const char* env = std::getenv("VMVSPREAD_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) limit = static_cast<int>(std::min<long>(v, 4096));
    }
    if (requested > 0) limit = std::min(limit, requested);
    return std::max(1, limit);
}

// Contiguous-range fan-out. Results must not depend on the split, which holds
// because every path derives its draws from (seed, path, step) alone.
template <class Fn>
void parallel_for(std::int64_t n, int n_threads, Fn&& fn) {
    if (n_threads <= 1 || n < 2 * n_threads) {
        fn(std::int64_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    std::int64_t chunk = (n + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
        std::int64_t lo = t * chunk, hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// Stream-key lanes: the levy draws of step j use the plain index, volatility
// paths and their initial draws live in disjoint high ranges.
inline constexpr std::uint64_t lane_levy = 0;
inline constexpr std::uint64_t lane_vol1 = 1;
inline constexpr std::uint64_t lane_vol2 = 2;
inline constexpr std::uint64_t lane_vol1_init = 3;
inline constexpr std::uint64_t lane_vol2_init = 4;

inline std::uint64_t lane_key(std::uint64_t lane, std::uint64_t j) { return (lane << 32) | j; }

struct JumpChol {
    double l11 = 0.0, l21 = 0.0, l22 = 0.0;
    JumpChol() = default;
    explicit JumpChol(const BivariateLevySpec& levy) {
        l11 = std::sqrt(std::max(levy.jump_cov11(), 0.0));
        l21 = l11 > 0.0 ? levy.jump_cov12() / l11 : 0.0;
        l22 = std::sqrt(std::max(levy.jump_cov22() - l21 * l21, 0.0));
    }
};

// Per-step coefficients for the two log-legs. The Gaussian part uses the
// exact step covariance (Cholesky of the integrated kernel products), so the
// continuous part of the simulated pair is exact in distribution; jumps and
// drift use the exact step mean of the kernel.
struct EnginePlan {
    SimulationGrid grid;
    std::vector<double> l11, l21, l22;
    std::vector<double> gbar, hbar;
    std::vector<double> drift1, drift2;
    double lam_dt = 0.0;
    double mu1 = 0.0, mu2 = 0.0;
    JumpChol jc;

    EnginePlan(const SimulationGrid& g, const KernelSpec& k1, const KernelSpec& k2,
               const BivariateLevySpec& levy)
        : grid(g) {
        int n = g.total_steps();
        l11.resize(n);
        l21.resize(n);
        l22.resize(n);
        gbar.resize(n);
        hbar.resize(n);
        drift1.resize(n);
        drift2.resize(n);
        const QuadRule& gl = gauss_legendre_rule(4);
        double c1 = levy.c1(), c2 = levy.c2(), rho = levy.rho();
        for (int j = 0; j < n; ++j) {
            double a = g.left_time(j), half = 0.5 * g.dt, mid = a + half;
            double igg = 0.0, ihh = 0.0, igh = 0.0, ig = 0.0, ih = 0.0;
            for (int q = 0; q < 4; ++q) {
                double s = mid + half * gl.x[q];
                double w = half * gl.w[q];
                double gv = k1.eval(g.T, s);
                double hv = k2.eval(g.T, s);
                igg += w * gv * gv;
                ihh += w * hv * hv;
                igh += w * gv * hv;
                ig += w * gv;
                ih += w * hv;
            }
            double v11 = c1 * c1 * igg;
            double v12 = rho * c1 * c2 * igh;
            double v22 = c2 * c2 * ihh;
            l11[j] = std::sqrt(std::max(v11, 0.0));
            l21[j] = l11[j] > 0.0 ? v12 / l11[j] : 0.0;
            l22[j] = std::sqrt(std::max(v22 - l21[j] * l21[j], 0.0));
            gbar[j] = ig / g.dt;
            hbar[j] = ih / g.dt;
            drift1[j] = levy.gamma1() * ig;
            drift2[j] = levy.gamma2() * ih;
        }
        if (levy.has_jumps()) {
            lam_dt = levy.lambda() * g.dt;
            mu1 = levy.jump_mean1();
            mu2 = levy.jump_mean2();
            jc = JumpChol(levy);
        }
    }

    // One step of both log-legs; s1, s2 scale the Gaussian part (stochastic
    // volatility frozen at the step's left edge; 1 in deterministic mode).
    void advance(StepStream& rng, int j, double s1, double s2, double& x1, double& x2) const {
        double z1, z2;
        rng.normal_pair(z1, z2);
        x1 += drift1[j] + s1 * l11[j] * z1;
        x2 += drift2[j] + s2 * (l21[j] * z1 + l22[j] * z2);
        if (lam_dt > 0.0) {
            int count = rng.poisson(lam_dt);
            for (int k = 0; k < count; ++k) {
                double w1, w2;
                rng.normal_pair(w1, w2);
                x1 += gbar[j] * (mu1 + jc.l11 * w1);
                x2 += hbar[j] * (mu2 + jc.l21 * w1 + jc.l22 * w2);
            }
        }
    }
};

inline McEstimate summarize(std::vector<double>& vals, std::uint64_t seed) {
    auto n = static_cast<std::int64_t>(vals.size());
    double mean = pairwise_sum(vals) / static_cast<double>(n);
    for (double& v : vals) v = sq(v - mean);
    double var = n > 1 ? pairwise_sum(vals) / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(std::max(var, 0.0) / static_cast<double>(n)), n, seed};
}

inline int pick_steps(const McConfig& cfg, double span) {
    double want = cfg.steps_per_year * span;
    int n = static_cast<int>(std::ceil(want - 1e-9));
    return std::max(cfg.min_steps, std::max(1, n));
}

// sigma^2 path generation shared by the engine and the public op. Values are
// indexed by backward step and hold the left-edge (pre-jump) state.
inline void fill_bns_path(const BnsVolSpec& spec, const SimulationGrid& grid, std::uint64_t seed,
                          std::uint64_t path, std::uint64_t lane, std::uint64_t init_lane,
                          std::vector<double>& out) {
    int n = grid.total_steps();
    out.resize(n);
    double v;
    if (spec.stationary_start) {
        StepStream init(seed, path, lane_key(init_lane, 0));
        v = init.gamma(spec.stationary_shape(), spec.jump_mean);
    } else {
        v = spec.sigma0_sq;
    }
    double decay = std::exp(-spec.lambda_mr * grid.dt);
    for (int j = n - 1; j >= 0; --j) {
        out[j] = v;
        StepStream rng(seed, path, lane_key(lane, static_cast<std::uint64_t>(j)));
        v *= decay;
        if (spec.jump_rate > 0.0) {
            int count = rng.poisson(spec.jump_rate * grid.dt);
            for (int k = 0; k < count; ++k) {
                double u = rng.uniform();
                double jmp = rng.exponential(spec.jump_mean);
                v += jmp * std::exp(-spec.lambda_mr * grid.dt * (1.0 - u));
            }
        }
    }
}

}  // namespace detail

struct LevyIncrement {
    double du;
    double dv;
};

// Raw driver increments per step (backward index), drift included. Identical
// output for identical (levy, grid, seed, path) regardless of threading.
inline std::vector<LevyIncrement> simulate_levy_increments(const BivariateLevySpec& levy,
                                                           const SimulationGrid& grid,
                                                           std::uint64_t seed,
                                                           std::uint64_t path = 0) {
    int n = grid.total_steps();
    std::vector<LevyIncrement> out(static_cast<std::size_t>(n));
    double sdt = std::sqrt(grid.dt);
    double c1 = levy.c1(), c2 = levy.c2(), rho = levy.rho();
    double q = std::sqrt(std::max(1.0 - rho * rho, 0.0));
    detail::JumpChol jc;
    double lam_dt = 0.0;
    if (levy.has_jumps()) {
        jc = detail::JumpChol(levy);
        lam_dt = levy.lambda() * grid.dt;
    }
    for (int j = 0; j < n; ++j) {
        StepStream rng(seed, path, detail::lane_key(detail::lane_levy, j));
        double z1, z2;
        rng.normal_pair(z1, z2);
        double du = levy.gamma1() * grid.dt + sdt * c1 * z1;
        double dv = levy.gamma2() * grid.dt + sdt * c2 * (rho * z1 + q * z2);
        if (lam_dt > 0.0) {
            int count = rng.poisson(lam_dt);
            for (int k = 0; k < count; ++k) {
                double w1, w2;
                rng.normal_pair(w1, w2);
                du += levy.jump_mean1() + jc.l11 * w1;
                dv += levy.jump_mean2() + jc.l21 * w1 + jc.l22 * w2;
            }
        }
        out[static_cast<std::size_t>(j)] = {du, dv};
    }
    return out;
}

// Left-Riemann Volterra sum sum_j g(T_eval, s_j) vol(s_j-) dU_j over the steps
// strictly before T_eval. vol_path is indexed like the increments.
inline double simulate_vmv(const KernelSpec& kernel, const std::vector<double>& vol_path,
                           const std::vector<LevyIncrement>& increments, const SimulationGrid& grid,
                           double T_eval, Leg leg = Leg::first) {
    if (vol_path.size() != increments.size())
        throw std::invalid_argument("simulate_vmv: vol path and increments disagree in length");
    if (increments.size() != static_cast<std::size_t>(grid.total_steps()))
        throw std::invalid_argument("simulate_vmv: increments do not match the grid");
    KahanSum acc;
    for (int j = 0; j < grid.total_steps(); ++j) {
        double s = grid.left_time(j);
        if (s >= T_eval - 0.5 * grid.dt) continue;
        double inc = (leg == Leg::first) ? increments[static_cast<std::size_t>(j)].du
                                         : increments[static_cast<std::size_t>(j)].dv;
        acc.add(kernel.eval(T_eval, s) * vol_path[static_cast<std::size_t>(j)] * inc);
    }
    return acc.value();
}

// sigma^2 path of the subordinator-driven OU variance, exact between jumps:
// sigma^2(t+dt) = e^{-l dt} sigma^2(t) + sum_k e^{-l(t+dt-tau_k)} J_k.
inline std::vector<double> simulate_bns_vol(const BnsVolSpec& spec, const SimulationGrid& grid,
                                            std::uint64_t seed, std::uint64_t path = 0) {
    std::vector<double> out;
    detail::fill_bns_path(spec, grid, seed, path, detail::lane_vol1, detail::lane_vol1_init, out);
    return out;
}

// E[exp(int_{t0}^T f(s) sigma^2(s) ds)] for the exponential-jump
// compound-Poisson OU variance: with F(u) = int_u^T f(s) e^{-l(s-u)} ds the
// integral is sigma^2(t0) F(t0) + sum_jumps J_k F(tau_k), so the expectation
// factorizes into the initial-state transform and an intensity integral.
inline double gamma_ou_exp_moment(const BnsVolSpec& spec, const std::function<double(double)>& f,
                                  double t0, double T, int n_nodes = 64) {
    if (!(T >= t0)) throw std::invalid_argument("exp moment: need T >= t0");
    if (T == t0) return 1.0;
    const QuadRule& gl = gauss_legendre_rule(n_nodes);
    auto big_f = [&](double u) {
        double half = 0.5 * (T - u), mid = 0.5 * (T + u);
        double acc = 0.0;
        for (int i = 0; i < n_nodes; ++i) {
            double s = mid + half * gl.x[i];
            acc += half * gl.w[i] * f(s) * std::exp(-spec.lambda_mr * (s - u));
        }
        return acc;
    };
    double f0 = big_f(t0);
    double m = spec.jump_mean;
    double log_initial;
    if (spec.stationary_start) {
        if (m * f0 >= 1.0 - 1e-12)
            throw NumericsError("exp moment: stationary transform diverges");
        log_initial = -spec.stationary_shape() * std::log1p(-m * f0);
    } else {
        log_initial = spec.sigma0_sq * f0;
    }
    double rate_term = 0.0;
    if (spec.jump_rate > 0.0) {
        double half = 0.5 * (T - t0), mid = 0.5 * (T + t0);
        for (int i = 0; i < n_nodes; ++i) {
            double u = mid + half * gl.x[i];
            double fu = big_f(u);
            if (m * fu >= 1.0 - 1e-12)
                throw NumericsError("exp moment: jump transform diverges");
            rate_term += half * gl.w[i] * (m * fu / (1.0 - m * fu));
        }
        rate_term *= spec.jump_rate;
    }
    return std::exp(log_initial + rate_term);
}

namespace detail {

// Runs fn(path, x1_T, x2_T) over all paths with the deterministic-volatility
// engine; fn must only write state owned by its path index.
template <class Fn>
void det_paths(const EnginePlan& plan, std::int64_t n_paths, std::uint64_t seed, int n_threads,
               Fn&& fn) {
    int n = plan.grid.total_steps();
    parallel_for(n_paths, n_threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            double x1 = 0.0, x2 = 0.0;
            for (int j = 0; j < n; ++j) {
                StepStream rng(seed, static_cast<std::uint64_t>(p), lane_key(lane_levy, j));
                plan.advance(rng, j, 1.0, 1.0, x1, x2);
            }
            fn(p, x1, x2);
        }
    });
}

template <class Fn>
void bns_paths(const EnginePlan& plan, const BnsVolSpec& v1, const BnsVolSpec& v2,
               std::int64_t n_paths, std::uint64_t seed, int n_threads, Fn&& fn) {
    int n = plan.grid.total_steps();
    parallel_for(n_paths, n_threads, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> s1, s2;
        for (std::int64_t p = lo; p < hi; ++p) {
            auto path = static_cast<std::uint64_t>(p);
            fill_bns_path(v1, plan.grid, seed, path, lane_vol1, lane_vol1_init, s1);
            fill_bns_path(v2, plan.grid, seed, path, lane_vol2, lane_vol2_init, s2);
            double x1 = 0.0, x2 = 0.0;
            for (int j = 0; j < n; ++j) {
                StepStream rng(seed, path, lane_key(lane_levy, j));
                plan.advance(rng, j, std::sqrt(s1[static_cast<std::size_t>(j)]),
                             std::sqrt(s2[static_cast<std::size_t>(j)]), x1, x2);
            }
            fn(p, x1, x2);
        }
    });
}

inline void require_sv_driver(const BivariateLevySpec& levy) {
    if (levy.kind() != BivariateLevySpec::Kind::Gaussian || levy.gamma1() != 0.0 ||
        levy.gamma2() != 0.0)
        throw std::invalid_argument(
            "mc: stochastic volatility supports only driftless Gaussian drivers");
}

}  // namespace detail

// Simulation price of the spread option from an observed-forward snapshot.
// Deterministic mode works from any valuation date; the stochastic-volatility
// mode requires t0 = 0, a driftless Gaussian driver, and reads the state off
// the forwards through the volatility-consistent exponential moment.
inline McEstimate mc_spread_price(const MarketSnapshot& snap, const SpotModelSpec& m1,
                                  const SpotModelSpec& m2, const BivariateLevySpec& levy,
                                  const OptionTerms& terms, std::int64_t n_paths,
                                  std::uint64_t seed, VolMode mode = VolMode::deterministic,
                                  const BnsVolSpec* vol1 = nullptr,
                                  const BnsVolSpec* vol2 = nullptr, const McConfig& cfg = {}) {
    if (n_paths <= 0) throw std::invalid_argument("mc: need n_paths > 0");
    if (snap.maturity != terms.maturity)
        throw std::invalid_argument("mc: snapshot maturity differs from option maturity");
    double T = terms.maturity, t0 = snap.t, tau = T - t0;
    if (tau == 0.0) return {std::max(snap.f1 - terms.heat_rate * snap.f2, 0.0), 0.0, n_paths, seed};
    double disc = std::exp(-terms.rate * tau);
    double lnk = std::log(terms.heat_rate);
    SimulationGrid grid = SimulationGrid::make(t0, T, detail::pick_steps(cfg, tau), 0.0);
    int n_threads = detail::resolve_threads(cfg.n_threads);
    std::vector<double> buf(static_cast<std::size_t>(n_paths));

    if (mode == VolMode::deterministic) {
        detail::EnginePlan plan(grid, m1.effective_kernel(), m2.effective_kernel(), levy);
        double base1 = std::log(m1.seasonality.value(T)) +
                       invert_forward(m1, levy, Leg::first, t0, T, snap.f1);
        double base2 = std::log(m2.seasonality.value(T)) +
                       invert_forward(m2, levy, Leg::second, t0, T, snap.f2) + lnk;
        detail::det_paths(plan, n_paths, seed, n_threads, [&](std::int64_t p, double x1, double x2) {
            buf[static_cast<std::size_t>(p)] =
                disc * std::max(std::exp(base1 + x1) - std::exp(base2 + x2), 0.0);
        });
    } else {
        if (!vol1 || !vol2) throw std::invalid_argument("mc: bns mode needs both vol specs");
        if (t0 != 0.0)
            throw std::invalid_argument("mc: stochastic-volatility pricing requires t0 = 0");
        detail::require_sv_driver(levy);
        detail::EnginePlan plan(grid, m1.kernel, m2.kernel, levy);
        auto f1sq = [&](double s) { return 0.5 * sq(levy.c1() * m1.kernel.eval(T, s)); };
        auto f2sq = [&](double s) { return 0.5 * sq(levy.c2() * m2.kernel.eval(T, s)); };
        double base1 = std::log(snap.f1) - std::log(gamma_ou_exp_moment(*vol1, f1sq, t0, T));
        double base2 =
            std::log(snap.f2) - std::log(gamma_ou_exp_moment(*vol2, f2sq, t0, T)) + lnk;
        detail::bns_paths(plan, *vol1, *vol2, n_paths, seed, n_threads,
                          [&](std::int64_t p, double x1, double x2) {
                              buf[static_cast<std::size_t>(p)] =
                                  disc *
                                  std::max(std::exp(base1 + x1) - std::exp(base2 + x2), 0.0);
                          });
    }
    return detail::summarize(buf, seed);
}

// Spread price with the spot state drawn from the (truncated) stationary law
// instead of a forward snapshot; deterministic volatility only. Exists chiefly
// to exercise warmup truncation: halving or doubling the warmup horizon must
// not move the estimate.
inline McEstimate mc_spread_price_stationary(const SpotModelSpec& m1, const SpotModelSpec& m2,
                                             const BivariateLevySpec& levy,
                                             const OptionTerms& terms, double t0,
                                             std::int64_t n_paths, std::uint64_t seed,
                                             const McConfig& cfg = {}) {
    if (n_paths <= 0) throw std::invalid_argument("mc: need n_paths > 0");
    double T = terms.maturity, tau = T - t0;
    if (!(tau > 0.0)) throw std::invalid_argument("mc: need t0 < maturity");
    KernelSpec k1 = m1.effective_kernel(), k2 = m2.effective_kernel();
    if (!k1.square_integrable() || !k2.square_integrable())
        throw std::invalid_argument("mc: stationary start needs square-integrable kernels");
    double warmup = cfg.warmup_horizon >= 0.0 ? cfg.warmup_horizon
                                              : choose_warmup({&k1, &k2}, cfg.eps_trunc);
    SimulationGrid grid = SimulationGrid::make(t0, T, detail::pick_steps(cfg, tau), warmup);
    detail::EnginePlan plan(grid, k1, k2, levy);
    double disc = std::exp(-terms.rate * tau);
    double base1 = std::log(m1.seasonality.value(T));
    double base2 = std::log(m2.seasonality.value(T)) + std::log(terms.heat_rate);
    std::vector<double> buf(static_cast<std::size_t>(n_paths));
    detail::det_paths(plan, n_paths, seed, detail::resolve_threads(cfg.n_threads),
                      [&](std::int64_t p, double x1, double x2) {
                          buf[static_cast<std::size_t>(p)] =
                              disc * std::max(std::exp(base1 + x1) - std::exp(base2 + x2), 0.0);
                      });
    return detail::summarize(buf, seed);
}

// E[S(T)] for one leg from the truncated stationary start at t0 = 0; the
// matching analytic value is forward_price(model, levy, leg, grid_start, T, 0).
inline McEstimate mc_forward(const SpotModelSpec& model, const BivariateLevySpec& levy, Leg leg,
                             double T, std::int64_t n_paths, std::uint64_t seed,
                             const McConfig& cfg = {}) {
    if (n_paths <= 0) throw std::invalid_argument("mc: need n_paths > 0");
    if (!(T > 0.0)) throw std::invalid_argument("mc: need T > 0");
    KernelSpec k = model.effective_kernel();
    if (!k.square_integrable())
        throw std::invalid_argument("mc: stationary forward needs a square-integrable kernel");
    double warmup =
        cfg.warmup_horizon >= 0.0 ? cfg.warmup_horizon : choose_warmup({&k}, cfg.eps_trunc);
    SimulationGrid grid = SimulationGrid::make(0.0, T, detail::pick_steps(cfg, T), warmup);
    int n = grid.total_steps();
    const QuadRule& gl = gauss_legendre_rule(4);
    std::vector<double> lstep(static_cast<std::size_t>(n)), dstep(static_cast<std::size_t>(n));
    double cscale = (leg == Leg::first) ? levy.c1() : levy.c2();
    double gam = (leg == Leg::first) ? levy.gamma1() : levy.gamma2();
    for (int j = 0; j < n; ++j) {
        double a = grid.left_time(j), half = 0.5 * grid.dt, mid = a + half;
        double igg = 0.0, ig = 0.0;
        for (int q = 0; q < 4; ++q) {
            double s = mid + half * gl.x[q];
            double gv = k.eval(T, s);
            igg += half * gl.w[q] * gv * gv;
            ig += half * gl.w[q] * gv;
        }
        lstep[static_cast<std::size_t>(j)] = cscale * std::sqrt(std::max(igg, 0.0));
        dstep[static_cast<std::size_t>(j)] = gam * ig;
    }
    double mark_sd = 0.0, lam_dt = 0.0;
    std::vector<double> gbar;
    if (levy.has_jumps()) {
        lam_dt = levy.lambda() * grid.dt;
        mark_sd = std::sqrt(std::max(
            (leg == Leg::first) ? levy.jump_cov11() : levy.jump_cov22(), 0.0));
        gbar.resize(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            double a = grid.left_time(j), half = 0.5 * grid.dt, mid = a + half;
            double ig = 0.0;
            for (int q = 0; q < 4; ++q) ig += half * gl.w[q] * k.eval(T, mid + half * gl.x[q]);
            gbar[static_cast<std::size_t>(j)] = ig / grid.dt;
        }
    }
    double mark_mean = (leg == Leg::first) ? levy.jump_mean1() : levy.jump_mean2();
    double base = std::log(model.seasonality.value(T));
    std::vector<double> buf(static_cast<std::size_t>(n_paths));
    detail::parallel_for(n_paths, detail::resolve_threads(cfg.n_threads),
                         [&](std::int64_t lo, std::int64_t hi) {
                             for (std::int64_t p = lo; p < hi; ++p) {
                                 double x = 0.0;
                                 for (int j = 0; j < n; ++j) {
                                     StepStream rng(seed, static_cast<std::uint64_t>(p),
                                                    detail::lane_key(detail::lane_levy, j));
                                     double z1, z2;
                                     rng.normal_pair(z1, z2);
                                     x += dstep[static_cast<std::size_t>(j)] +
                                          lstep[static_cast<std::size_t>(j)] * z1;
                                     (void)z2;
                                     if (lam_dt > 0.0) {
                                         int count = rng.poisson(lam_dt);
                                         for (int kk = 0; kk < count; ++kk)
                                             x += gbar[static_cast<std::size_t>(j)] *
                                                  (mark_mean + mark_sd * rng.normal());
                                     }
                                 }
                                 buf[static_cast<std::size_t>(p)] = std::exp(base + x);
                             }
                         });
    return detail::summarize(buf, seed);
}

// Samples total exchange volatilities induced by independent BNS variance
// paths on the two legs, for use with margrabe_stochastic_vol.
inline std::function<double(std::uint64_t)> make_bns_sigma_sampler(
    const SpotModelSpec& m1, const SpotModelSpec& m2, const BivariateLevySpec& levy,
    const BnsVolSpec& v1, const BnsVolSpec& v2, double t0, double T, int n_steps,
    std::uint64_t seed) {
    detail::require_sv_driver(levy);
    SimulationGrid grid = SimulationGrid::make(t0, T, n_steps, 0.0);
    const QuadRule& gl = gauss_legendre_rule(4);
    int n = grid.total_steps();
    std::vector<double> agg(static_cast<std::size_t>(n)), bgg(static_cast<std::size_t>(n)),
        dgg(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        double a = grid.left_time(j), half = 0.5 * grid.dt, mid = a + half;
        double igg = 0.0, igh = 0.0, ihh = 0.0;
        for (int q = 0; q < 4; ++q) {
            double s = mid + half * gl.x[q];
            double w = half * gl.w[q];
            double gv = m1.kernel.eval(T, s);
            double hv = m2.kernel.eval(T, s);
            igg += w * gv * gv;
            igh += w * gv * hv;
            ihh += w * hv * hv;
        }
        agg[static_cast<std::size_t>(j)] = sq(levy.c1()) * igg;
        bgg[static_cast<std::size_t>(j)] = levy.rho() * levy.c1() * levy.c2() * igh;
        dgg[static_cast<std::size_t>(j)] = sq(levy.c2()) * ihh;
    }
    return [=](std::uint64_t i) {
        std::vector<double> s1, s2;
        detail::fill_bns_path(v1, grid, seed, i, detail::lane_vol1, detail::lane_vol1_init, s1);
        detail::fill_bns_path(v2, grid, seed, i, detail::lane_vol2, detail::lane_vol2_init, s2);
        KahanSum acc;
        for (int j = 0; j < n; ++j) {
            auto u = static_cast<std::size_t>(j);
            acc.add(agg[u] * s1[u] - 2.0 * bgg[u] * std::sqrt(s1[u] * s2[u]) + dgg[u] * s2[u]);
        }
        return std::sqrt(std::max(acc.value(), 0.0));
    };
}

// phi(t, f1, f2) -> forward positions
using StrategyFn = std::function<std::pair<double, double>(double, double, double)>;

struct HedgeErrorResult {
    McEstimate eps_sq;        // E[(V_hat(T) - discounted payoff)^2]
    McEstimate portfolio;     // mean of V_hat(T); equals the initial value in expectation
    double v0;
};

// Self-financing discrete hedge simulation. The strategy is evaluated on the
// rebalance edges; between edges the discounted forward gains telescope, so
// forwards are only materialized there. scalings[k] multiplies the base
// strategy's two positions for result entry k; all variants share every path
// and draw, so differences between entries carry almost no sampling noise.
struct HedgeBatchResult {
    std::vector<McEstimate> eps_sq;
    McEstimate portfolio;  // for the first (reference) scaling
    double v0;
};

inline HedgeBatchResult mc_hedge_error_batch(
    const StrategyFn& strategy, const std::vector<std::pair<double, double>>& scalings,
    const MarketSnapshot& snap, const SpotModelSpec& m1, const SpotModelSpec& m2,
    const BivariateLevySpec& levy, const OptionTerms& terms, double v0, int n_rebalance,
    std::int64_t n_paths, std::uint64_t seed, const McConfig& cfg = {},
    std::vector<std::vector<double>>* per_path_eps_sq = nullptr) {
    if (scalings.empty()) throw std::invalid_argument("hedge mc: need at least one scaling");
    if (n_rebalance < 1) throw std::invalid_argument("hedge mc: need n_rebalance >= 1");
    if (n_paths <= 0) throw std::invalid_argument("hedge mc: need n_paths > 0");
    if (snap.maturity != terms.maturity)
        throw std::invalid_argument("hedge mc: snapshot maturity differs from option maturity");
    double T = terms.maturity, t0 = snap.t, tau = T - t0;
    if (!(tau > 0.0)) throw std::invalid_argument("hedge mc: need t0 < maturity");
    int n_fine = std::max(cfg.hedge_fine_steps, n_rebalance);
    n_fine = ((n_fine + n_rebalance - 1) / n_rebalance) * n_rebalance;
    int stride = n_fine / n_rebalance;
    SimulationGrid grid = SimulationGrid::make(t0, T, n_fine, 0.0);
    detail::EnginePlan plan(grid, m1.effective_kernel(), m2.effective_kernel(), levy);

    // per-step marginal cumulant integrals, then prefix sums to get
    // ln Psi_i(t_j, T) at every edge
    const QuadRule& gl = gauss_legendre_rule(4);
    std::vector<double> psi1(static_cast<std::size_t>(n_fine) + 1, 0.0),
        psi2(static_cast<std::size_t>(n_fine) + 1, 0.0);
    KernelSpec k1 = m1.effective_kernel(), k2 = m2.effective_kernel();
    for (int j = 0; j < n_fine; ++j) {
        double a = grid.left_time(j), half = 0.5 * grid.dt, mid = a + half;
        double i1 = 0.0, i2 = 0.0;
        for (int q = 0; q < 4; ++q) {
            double s = mid + half * gl.x[q];
            double w = half * gl.w[q];
            i1 += w * levy.marginal_cumulant_u(cdouble(0.0, -k1.eval(T, s))).real();
            i2 += w * levy.marginal_cumulant_v(cdouble(0.0, -k2.eval(T, s))).real();
        }
        psi1[static_cast<std::size_t>(j) + 1] = psi1[static_cast<std::size_t>(j)] + i1;
        psi2[static_cast<std::size_t>(j) + 1] = psi2[static_cast<std::size_t>(j)] + i2;
    }
    double x1state = invert_forward(m1, levy, Leg::first, t0, T, snap.f1);
    double x2state = invert_forward(m2, levy, Leg::second, t0, T, snap.f2);
    double lnL1 = std::log(m1.seasonality.value(T)), lnL2 = std::log(m2.seasonality.value(T));
    double r = terms.rate, k_heat = terms.heat_rate;

    // discounted log-forward offsets at edge j: ln f_hat_i = off_i[j] + x_i
    auto edge_time = [&](int j) { return T - j * grid.dt; };
    std::vector<double> off1(static_cast<std::size_t>(n_fine) + 1),
        off2(static_cast<std::size_t>(n_fine) + 1);
    for (int j = 0; j <= n_fine; ++j) {
        off1[static_cast<std::size_t>(j)] =
            lnL1 + x1state + psi1[static_cast<std::size_t>(j)] - r * edge_time(j);
        off2[static_cast<std::size_t>(j)] =
            lnL2 + x2state + psi2[static_cast<std::size_t>(j)] - r * edge_time(j);
    }

    std::size_t n_var = scalings.size();
    std::vector<std::vector<double>> eps(n_var,
                                         std::vector<double>(static_cast<std::size_t>(n_paths)));
    std::vector<double> port(static_cast<std::size_t>(n_paths));
    double v0_disc = std::exp(-r * t0) * v0;

    // strategy callbacks run on one thread, in path order, so caching
    // strategies need no synchronization
    std::vector<double> phi1(n_var), phi2(n_var), vhat(n_var);
    for (std::int64_t p = 0; p < n_paths; ++p) {
        double x1 = 0.0, x2 = 0.0;
        double f1h = std::exp(off1[static_cast<std::size_t>(n_fine)]);
        double f2h = std::exp(off2[static_cast<std::size_t>(n_fine)]);
        double ert = std::exp(r * t0);
        auto [p1, p2] = strategy(t0, f1h * ert, f2h * ert);
        vhat.assign(n_var, v0_disc);
        for (std::size_t v = 0; v < n_var; ++v) {
            phi1[v] = scalings[v].first * p1;
            phi2[v] = scalings[v].second * p2;
        }
        for (int j = n_fine - 1; j >= 0; --j) {
            StepStream rng(seed, static_cast<std::uint64_t>(p),
                           detail::lane_key(detail::lane_levy, j));
            plan.advance(rng, j, 1.0, 1.0, x1, x2);
            if (j % stride == 0) {
                double nf1 = std::exp(off1[static_cast<std::size_t>(j)] + x1);
                double nf2 = std::exp(off2[static_cast<std::size_t>(j)] + x2);
                for (std::size_t v = 0; v < n_var; ++v)
                    vhat[v] += phi1[v] * (nf1 - f1h) + phi2[v] * (nf2 - f2h);
                f1h = nf1;
                f2h = nf2;
                if (j > 0) {
                    double t = edge_time(j);
                    double e = std::exp(r * t);
                    auto [q1, q2] = strategy(t, f1h * e, f2h * e);
                    for (std::size_t v = 0; v < n_var; ++v) {
                        phi1[v] = scalings[v].first * q1;
                        phi2[v] = scalings[v].second * q2;
                    }
                }
            }
        }
        double s1 = std::exp(lnL1 + x1state + x1);   // psi(T,T) = 1
        double s2 = std::exp(lnL2 + x2state + x2);
        double target = std::exp(-r * T) * std::max(s1 - k_heat * s2, 0.0);
        for (std::size_t v = 0; v < n_var; ++v)
            eps[v][static_cast<std::size_t>(p)] = sq(vhat[v] - target);
        port[static_cast<std::size_t>(p)] = vhat[0];
    }
    HedgeBatchResult out;
    out.v0 = v0;
    if (per_path_eps_sq) *per_path_eps_sq = eps;
    for (std::size_t v = 0; v < n_var; ++v) out.eps_sq.push_back(detail::summarize(eps[v], seed));
    out.portfolio = detail::summarize(port, seed);
    return out;
}

inline HedgeErrorResult mc_hedge_error(const StrategyFn& strategy, const MarketSnapshot& snap,
                                       const SpotModelSpec& m1, const SpotModelSpec& m2,
                                       const BivariateLevySpec& levy, const OptionTerms& terms,
                                       double v0, int n_rebalance, std::int64_t n_paths,
                                       std::uint64_t seed, const McConfig& cfg = {}) {
    auto batch = mc_hedge_error_batch(strategy, {{1.0, 1.0}}, snap, m1, m2, levy, terms, v0,
                                      n_rebalance, n_paths, seed, cfg);
    return {batch.eps_sq[0], batch.portfolio, v0};
}

struct PathDumpRow {
    std::int64_t path;
    int step;           // backward index of the step ending at t
    double t;
    double u, v;        // cumulative driver values since the grid start
    double sig1_sq, sig2_sq;
    double x, y;        // spot log-deseasoned states at t
};

// Diagnostic path table built from the left-point Volterra sums; O(steps^2)
// per path through a uniform-lag kernel table.
inline std::vector<PathDumpRow> dump_paths(const SpotModelSpec& m1, const SpotModelSpec& m2,
                                           const BivariateLevySpec& levy, double t0, double T,
                                           int n_steps, std::int64_t n_paths, std::uint64_t seed,
                                           VolMode mode = VolMode::deterministic,
                                           const BnsVolSpec* vol1 = nullptr,
                                           const BnsVolSpec* vol2 = nullptr,
                                           double warmup_horizon = 0.0) {
    SimulationGrid grid = SimulationGrid::make(t0, T, n_steps, warmup_horizon);
    int n = grid.total_steps();
    KernelSpec k1 = (mode == VolMode::bns) ? m1.kernel : m1.effective_kernel();
    KernelSpec k2 = (mode == VolMode::bns) ? m2.kernel : m2.effective_kernel();
    std::vector<double> lag1(static_cast<std::size_t>(n) + 1), lag2(static_cast<std::size_t>(n) + 1);
    for (int m = 0; m <= n; ++m) {
        lag1[static_cast<std::size_t>(m)] = k1.eval(grid.dt * m, 0.0);
        lag2[static_cast<std::size_t>(m)] = k2.eval(grid.dt * m, 0.0);
    }
    std::vector<PathDumpRow> rows;
    rows.reserve(static_cast<std::size_t>(n_paths) * n);
    std::vector<double> s1(static_cast<std::size_t>(n), 1.0), s2(static_cast<std::size_t>(n), 1.0);
    for (std::int64_t p = 0; p < n_paths; ++p) {
        auto inc = simulate_levy_increments(levy, grid, seed, static_cast<std::uint64_t>(p));
        if (mode == VolMode::bns) {
            if (!vol1 || !vol2) throw std::invalid_argument("dump: bns mode needs both vol specs");
            detail::fill_bns_path(*vol1, grid, seed, static_cast<std::uint64_t>(p),
                                  detail::lane_vol1, detail::lane_vol1_init, s1);
            detail::fill_bns_path(*vol2, grid, seed, static_cast<std::uint64_t>(p),
                                  detail::lane_vol2, detail::lane_vol2_init, s2);
        }
        double cu = 0.0, cv = 0.0;
        for (int e = n - 1; e >= 0; --e) {
            // edge e corresponds to time T - e*dt; step e covers the interval
            // ending there
            cu += inc[static_cast<std::size_t>(e)].du;
            cv += inc[static_cast<std::size_t>(e)].dv;
            double x = 0.0, y = 0.0;
            for (int j = n - 1; j >= e; --j) {
                int m = j - e + 1;  // lag in steps from the left edge of step j
                double w1 = (mode == VolMode::bns) ? std::sqrt(s1[static_cast<std::size_t>(j)])
                                                   : 1.0;
                double w2 = (mode == VolMode::bns) ? std::sqrt(s2[static_cast<std::size_t>(j)])
                                                   : 1.0;
                x += lag1[static_cast<std::size_t>(m)] * w1 * inc[static_cast<std::size_t>(j)].du;
                y += lag2[static_cast<std::size_t>(m)] * w2 * inc[static_cast<std::size_t>(j)].dv;
            }
            PathDumpRow row;
            row.path = p;
            row.step = e;
            row.t = T - e * grid.dt;
            row.u = cu;
            row.v = cv;
            row.sig1_sq = (mode == VolMode::bns) ? s1[static_cast<std::size_t>(e)]
                                                 : sq(m1.vol);
            row.sig2_sq = (mode == VolMode::bns) ? s2[static_cast<std::size_t>(e)]
                                                 : sq(m2.vol);
            row.x = x;
            row.y = y;
            rows.push_back(row);
        }
    }
    return rows;
}

}
