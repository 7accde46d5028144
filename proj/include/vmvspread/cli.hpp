#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fourier.hpp"
#include "hedging.hpp"
#include "market.hpp"
#include "mc.hpp"
#include "scenario.hpp"
#include "version.hpp"

namespace vmvspread::cli {

// 17 significant digits: enough to round-trip a double, so reruns diff clean.
inline std::string fmt(double v) {
    char buf[48];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string fmt_int(std::int64_t v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    return out;
}

inline std::string csv_header(const Scenario& scn) {
    return std::string("# vmvspread ") + version_string + ", scenario=" +
           hash_hex(scn.content_hash) + ", seed=" + std::to_string(scn.seed) + "\n";
}

inline std::string run_price(const Scenario& scn) {
    if (scn.stochastic_vol())
        throw ScenarioError("price: stochastic-volatility scenarios are priced with simulate");
    PriceResult res = price_spread(scn.snapshot, scn.spot1, scn.spot2, scn.levy, scn.option,
                                   scn.damping, scn.quad);
    std::string out = csv_header(scn);
    out += "t,T,k,c,price,abs_err_est\n";
    out += fmt(scn.snapshot.t) + "," + fmt(scn.option.maturity) + "," + fmt(scn.option.heat_rate) +
           "," + fmt(scn.damping.c) + "," + fmt(res.price) + "," + fmt(res.abs_err_est) + "\n";
    return out;
}

inline std::string run_forward(const Scenario& scn) {
    if (scn.stochastic_vol())
        throw ScenarioError("forward: state inversion assumes the deterministic-volatility model");
    std::string out = csv_header(scn);
    out += "leg,t,T,f_observed,x_state,ln_psi,f_reconstructed\n";
    double t = scn.snapshot.t, T = scn.option.maturity;
    const double obs[2] = {scn.snapshot.f1, scn.snapshot.f2};
    const SpotModelSpec* spots[2] = {&scn.spot1, &scn.spot2};
    const Leg legs[2] = {Leg::first, Leg::second};
    for (int i = 0; i < 2; ++i) {
        double x = invert_forward(*spots[i], scn.levy, legs[i], t, T, obs[i]);
        double lp = log_psi_marginal(*spots[i], scn.levy, legs[i], t, T);
        double rec = forward_price(*spots[i], scn.levy, legs[i], t, T, x);
        out += fmt_int(i + 1) + "," + fmt(t) + "," + fmt(T) + "," + fmt(obs[i]) + "," + fmt(x) +
               "," + fmt(lp) + "," + fmt(rec) + "\n";
    }
    return out;
}

inline std::string run_hedge(const Scenario& scn) {
    if (scn.stochastic_vol())
        throw ScenarioError("hedge: stochastic-volatility scenarios are not supported");
    PriceSurface surf(scn.snapshot, scn.spot1, scn.spot2, scn.levy, scn.option, scn.damping,
                      scn.quad);
    Greeks g = surf.greeks_at(scn.snapshot.f1, scn.snapshot.f2);
    auto price_fn = [&surf](double f1, double f2) { return surf.price_at(f1, f2); };
    HedgeSystem sys = assemble_hedge_system(scn.snapshot, scn.spot1, scn.spot2, scn.levy,
                                            scn.option, g, price_fn);
    HedgeSolution sol = solve_hedge(sys);
    long double r1 = (long double)sys.a11 * sol.phi1 + (long double)sys.a12 * sol.phi2 - sys.b1;
    long double r2 = (long double)sys.a12 * sol.phi1 + (long double)sys.a22 * sol.phi2 - sys.b2;
    double residual = static_cast<double>(std::max(std::abs(r1), std::abs(r2)));
    std::string out = csv_header(scn);
    out += "t,phi1,phi2,det,cond,residual\n";
    out += fmt(scn.snapshot.t) + "," + fmt(sol.phi1) + "," + fmt(sol.phi2) + "," +
           fmt(sol.determinant) + "," + fmt(sol.condition) + "," + fmt(residual) + "\n";
    return out;
}

inline std::string run_simulate(const Scenario& scn, bool dump) {
    VolMode mode = scn.stochastic_vol() ? VolMode::bns : VolMode::deterministic;
    const BnsVolSpec* v1 = scn.vol1 ? &*scn.vol1 : nullptr;
    const BnsVolSpec* v2 = scn.vol2 ? &*scn.vol2 : nullptr;
    std::string out = csv_header(scn);
    if (dump) {
        double tau = scn.option.maturity - scn.snapshot.t;
        int n_steps = detail::pick_steps(scn.mc, tau);
        auto rows = dump_paths(scn.spot1, scn.spot2, scn.levy, scn.snapshot.t,
                               scn.option.maturity, n_steps, scn.n_paths, scn.seed, mode, v1, v2);
        out += "path,step,t,u,v,sig1_sq,sig2_sq,x,y\n";
        for (const auto& r : rows)
            out += fmt_int(r.path) + "," + fmt_int(r.step) + "," + fmt(r.t) + "," + fmt(r.u) +
                   "," + fmt(r.v) + "," + fmt(r.sig1_sq) + "," + fmt(r.sig2_sq) + "," + fmt(r.x) +
                   "," + fmt(r.y) + "\n";
        return out;
    }
    McEstimate est = mc_spread_price(scn.snapshot, scn.spot1, scn.spot2, scn.levy, scn.option,
                                     scn.n_paths, scn.seed, mode, v1, v2, scn.mc);
    out += "t,T,k,price,std_err,n_paths,seed\n";
    out += fmt(scn.snapshot.t) + "," + fmt(scn.option.maturity) + "," +
           fmt(scn.option.heat_rate) + "," + fmt(est.mean) + "," + fmt(est.std_err) + "," +
           fmt_int(est.n_paths) + "," + std::to_string(est.seed) + "\n";
    return out;
}

// Cross-checks Fourier against the no-arbitrage band, damping invariance,
// Margrabe (Gaussian scenarios only) and Monte Carlo. Returns 0 or the
// validation-failure exit code, with the table written to `out`.
inline int run_validate(const Scenario& scn, std::string& out) {
    if (scn.stochastic_vol())
        throw ScenarioError("validate: stochastic-volatility scenarios are not supported");
    out = csv_header(scn);
    out += "check,value,reference,tolerance,status\n";
    bool all_pass = true;
    auto row = [&](const std::string& name, double value, double reference, double tol,
                   bool pass) {
        out += name + "," + fmt(value) + "," + fmt(reference) + "," + fmt(tol) + "," +
               (pass ? "pass" : "fail") + "\n";
        all_pass = all_pass && pass;
    };

    PriceResult res = price_spread(scn.snapshot, scn.spot1, scn.spot2, scn.levy, scn.option,
                                   scn.damping, scn.quad);
    double tau = scn.option.maturity - scn.snapshot.t;
    double disc = std::exp(-scn.option.rate * tau);
    double lower = disc * std::max(scn.snapshot.f1 - scn.option.heat_rate * scn.snapshot.f2, 0.0);
    double upper = disc * scn.snapshot.f1;
    double band_tol = std::max(10.0 * res.abs_err_est, 1e-12 * scn.snapshot.f1);
    row("band_lower", res.price, lower, band_tol, res.price >= lower - band_tol);
    row("band_upper", res.price, upper, band_tol, res.price <= upper + band_tol);

    double pmin = res.price, pmax = res.price;
    for (double c : {1.25, 2.0, 3.0}) {
        PriceResult alt = price_spread(scn.snapshot, scn.spot1, scn.spot2, scn.levy, scn.option,
                                       DampingConfig(c), scn.quad);
        pmin = std::min(pmin, alt.price);
        pmax = std::max(pmax, alt.price);
    }
    double damp_spread = (pmax - pmin) / std::max(std::abs(res.price), 1e-300);
    row("damping_range", damp_spread, 0.0, 1e-7, damp_spread < 1e-7);

    if (scn.levy.kind() == BivariateLevySpec::Kind::Gaussian) {
        double sig = gaussian_total_vol(scn.spot1, scn.spot2, scn.levy, scn.snapshot.t,
                                        scn.option.maturity);
        double mg = margrabe_price(scn.snapshot.f1, scn.snapshot.f2, scn.option.heat_rate, sig,
                                   scn.option.rate, scn.snapshot.t, scn.option.maturity);
        double rel = std::abs(res.price - mg) / std::max(std::abs(mg), 1e-300);
        row("margrabe_rel_diff", rel, 0.0, 1e-6, rel < 1e-6);
    }

    McEstimate est = mc_spread_price(scn.snapshot, scn.spot1, scn.spot2, scn.levy, scn.option,
                                     scn.n_paths, scn.seed, VolMode::deterministic, nullptr,
                                     nullptr, scn.mc);
    double z = std::abs(res.price - est.mean) / std::max(est.std_err, 1e-300);
    row("mc_z_score", z, 0.0, 3.5, z < 3.5);

    return all_pass ? 0 : 4;
}

struct RunRequest {
    std::string command;
    std::string scenario_path;
    std::string out_path;  // empty: stdout
    std::optional<std::int64_t> paths;
    std::optional<std::uint64_t> seed;
    bool dump = false;
};

inline void write_output(const std::string& path, const std::string& csv) {
    if (path.empty()) {
        std::cout << csv;
        std::cout.flush();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ScenarioError("cannot open output file " + path);
    f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!f) throw ScenarioError("short write to " + path);
}

// Exit codes: 0 ok, 1 configuration, 2 numerics, 3 singular hedge system,
// 4 validation failure.
inline int run_command(const RunRequest& req, std::ostream& err = std::cerr) {
    try {
        Scenario scn = parse_scenario(req.scenario_path);
        if (req.paths) {
            if (*req.paths <= 0) throw ScenarioError("--paths: must be > 0");
            scn.n_paths = *req.paths;
        }
        if (req.seed) scn.seed = *req.seed;

        std::string csv;
        int code = 0;
        if (req.command == "price")
            csv = run_price(scn);
        else if (req.command == "forward")
            csv = run_forward(scn);
        else if (req.command == "hedge")
            csv = run_hedge(scn);
        else if (req.command == "simulate")
            csv = run_simulate(scn, req.dump);
        else if (req.command == "validate")
            code = run_validate(scn, csv);
        else
            throw ScenarioError("unknown command: " + req.command);
        write_output(req.out_path, csv);
        return code;
    } catch (const ScenarioError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const SingularSystemError& e) {
        err << "singular hedge system: " << e.what() << "\n";
        return 3;
    } catch (const NumericsError& e) {
        err << "numerics error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace vmvspread::cli
