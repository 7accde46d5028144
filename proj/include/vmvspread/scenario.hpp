#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "fourier.hpp"
#include "kernels.hpp"
#include "levy.hpp"
#include "market.hpp"
#include "mc.hpp"

namespace vmvspread {

struct Scenario {
    BivariateLevySpec levy;
    SpotModelSpec spot1;
    SpotModelSpec spot2;
    OptionTerms option;
    MarketSnapshot snapshot;
    DampingConfig damping;
    QuadratureSpec quad;
    McConfig mc;
    std::int64_t n_paths = 200000;
    std::uint64_t seed = 1;
    std::optional<BnsVolSpec> vol1;
    std::optional<BnsVolSpec> vol2;
    std::uint64_t content_hash = 0;

    bool stochastic_vol() const { return vol1.has_value(); }
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// section -> ordered key/value pairs, with strict known-name checking done by
// the consumer
struct RawScenario {
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::string base_dir;
};

inline RawScenario tokenize_scenario(const std::string& text, const std::string& base_dir) {
    RawScenario raw;
    raw.base_dir = base_dir;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ScenarioError("scenario line " + std::to_string(lineno) +
                                    ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ScenarioError("scenario line " + std::to_string(lineno) +
                                    ": empty section name");
            raw.sections[section];
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ScenarioError("scenario line " + std::to_string(lineno) +
                                ": expected key = value");
        if (section.empty())
            throw ScenarioError("scenario line " + std::to_string(lineno) +
                                ": key outside any section");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ScenarioError("scenario line " + std::to_string(lineno) +
                                ": empty key or value");
        if (!raw.sections[section].emplace(key, val).second)
            throw ScenarioError("[" + section + "] " + key + ": duplicate key");
    }
    return raw;
}

// Typed access with field-path errors; tracks consumption so unknown keys can
// be reported.
class SectionReader {
public:
    SectionReader(const RawScenario& raw, std::string name, bool required)
        : name_(std::move(name)) {
        auto it = raw.sections.find(name_);
        if (it == raw.sections.end()) {
            if (required) throw ScenarioError("[" + name_ + "]: missing required section");
            present_ = false;
        } else {
            kv_ = &it->second;
        }
    }

    bool present() const { return present_; }

    std::string require_str(const std::string& key) {
        auto v = fetch(key);
        if (!v) throw ScenarioError("[" + name_ + "] " + key + ": missing required key");
        return *v;
    }

    std::optional<std::string> opt_str(const std::string& key) { return fetch(key); }

    double require_num(const std::string& key) { return to_num(key, require_str(key)); }

    double opt_num(const std::string& key, double fallback) {
        auto v = fetch(key);
        return v ? to_num(key, *v) : fallback;
    }

    std::int64_t opt_int(const std::string& key, std::int64_t fallback) {
        auto v = fetch(key);
        if (!v) return fallback;
        try {
            std::size_t used = 0;
            long long r = std::stoll(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
            return r;
        } catch (const std::exception&) {
            throw ScenarioError("[" + name_ + "] " + key + ": not an integer: " + *v);
        }
    }

    std::uint64_t opt_uint(const std::string& key, std::uint64_t fallback) {
        auto v = fetch(key);
        if (!v) return fallback;
        try {
            std::size_t used = 0;
            unsigned long long r = std::stoull(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
            return r;
        } catch (const std::exception&) {
            throw ScenarioError("[" + name_ + "] " + key + ": not an unsigned integer: " + *v);
        }
    }

    bool opt_bool(const std::string& key, bool fallback) {
        auto v = fetch(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1") return true;
        if (*v == "false" || *v == "0") return false;
        throw ScenarioError("[" + name_ + "] " + key + ": expected true or false, got " + *v);
    }

    std::vector<double> opt_num_list(const std::string& key) {
        auto v = fetch(key);
        std::vector<double> out;
        if (!v) return out;
        std::istringstream in(*v);
        std::string tok;
        while (in >> tok) out.push_back(to_num(key, tok));
        return out;
    }

    void finish() const {
        if (!kv_) return;
        for (const auto& [k, v] : *kv_)
            if (!used_.count(k))
                throw ScenarioError("[" + name_ + "] " + k + ": unknown key");
    }

    const std::string& name() const { return name_; }

private:
    std::optional<std::string> fetch(const std::string& key) {
        if (!kv_) return std::nullopt;
        auto it = kv_->find(key);
        if (it == kv_->end()) return std::nullopt;
        used_.insert(key);
        return it->second;
    }

    double to_num(const std::string& key, const std::string& v) const {
        char* end = nullptr;
        double r = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0')
            throw ScenarioError("[" + name_ + "] " + key + ": not a number: " + v);
        return r;
    }

    std::string name_;
    const std::map<std::string, std::string>* kv_ = nullptr;
    bool present_ = true;
    std::set<std::string> used_;
};

inline std::vector<std::pair<double, double>> load_lag_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("tabulated kernel: cannot open " + path);
    std::vector<std::pair<double, double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        for (char& c : line)
            if (c == ',') c = ' ';
        line = trim(line);
        if (line.empty()) continue;
        std::istringstream ls(line);
        double lag, val;
        if (!(ls >> lag >> val))
            throw ScenarioError("tabulated kernel " + path + " line " + std::to_string(lineno) +
                                ": expected lag,value");
        rows.emplace_back(lag, val);
    }
    return rows;
}

inline KernelSpec parse_kernel(SectionReader& sec, const std::string& base_dir) {
    std::string kind = sec.require_str("kernel");
    double scale = sec.opt_num("scale", 1.0);
    try {
        if (kind == "constant") return KernelSpec::constant(scale);
        if (kind == "ou") return KernelSpec::ou(scale, sec.require_num("alpha"));
        if (kind == "carma") {
            std::vector<double> ar = sec.opt_num_list("ar");
            std::vector<double> ma = sec.opt_num_list("ma");  // b0..b_{q-1}; b_q = 1 implied
            if (ar.empty())
                throw ScenarioError("[" + sec.name() + "] ar: required for carma kernels");
            return KernelSpec::carma(ar, ma, scale);
        }
        if (kind == "tabulated") {
            std::string file = sec.require_str("file");
            if (!file.empty() && file.front() != '/' && !base_dir.empty())
                file = base_dir + "/" + file;
            auto rows = load_lag_table(file);
            std::vector<double> lags, vals;
            for (auto& [l, v] : rows) {
                lags.push_back(l);
                vals.push_back(v);
            }
            return KernelSpec::tabulated(lags, vals, scale);
        }
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("[" + sec.name() + "] kernel: " + e.what());
    }
    throw ScenarioError("[" + sec.name() + "] kernel: unknown kind " + kind);
}

inline SeasonalitySpec parse_seasonality(SectionReader& sec) {
    std::string kind = sec.opt_str("seasonality").value_or("constant");
    try {
        if (kind == "constant") return SeasonalitySpec::constant(sec.require_num("level"));
        if (kind == "trend_sine")
            return SeasonalitySpec::trend_sine(sec.require_num("level"), sec.opt_num("slope", 0.0),
                                               sec.opt_num("amplitude", 0.0),
                                               sec.opt_num("period", 1.0),
                                               sec.opt_num("phase", 0.0));
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("[" + sec.name() + "] seasonality: " + e.what());
    }
    throw ScenarioError("[" + sec.name() + "] seasonality: unknown kind " + kind);
}

inline SpotModelSpec parse_spot(const RawScenario& raw, const std::string& name) {
    SectionReader sec(raw, name, true);
    SeasonalitySpec seas = parse_seasonality(sec);
    KernelSpec kernel = parse_kernel(sec, raw.base_dir);
    double vol = sec.opt_num("vol", 1.0);
    sec.finish();
    try {
        return {std::move(seas), std::move(kernel), vol};
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("[" + name + "] vol: " + e.what());
    }
}

inline BivariateLevySpec parse_levy(const RawScenario& raw) {
    SectionReader sec(raw, "levy", true);
    std::string type = sec.require_str("type");
    double g1 = sec.opt_num("gamma1", 0.0), g2 = sec.opt_num("gamma2", 0.0);
    double c1 = sec.opt_num("c1", 1.0), c2 = sec.opt_num("c2", 1.0);
    double rho = sec.opt_num("rho", 0.0);
    try {
        if (type == "gaussian") {
            sec.finish();
            return BivariateLevySpec::gaussian(g1, g2, c1, c2, rho);
        }
        if (type == "merton") {
            double lam = sec.require_num("lambda");
            double m1 = sec.opt_num("jump_mean1", 0.0), m2 = sec.opt_num("jump_mean2", 0.0);
            double s11 = sec.opt_num("jump_cov11", 0.0), s12 = sec.opt_num("jump_cov12", 0.0),
                   s22 = sec.opt_num("jump_cov22", 0.0);
            sec.finish();
            return BivariateLevySpec::merton(g1, g2, c1, c2, rho, lam, m1, m2, s11, s12, s22);
        }
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(std::string("[levy]: ") + e.what());
    }
    throw ScenarioError("[levy] type: unknown type " + type);
}

inline std::optional<BnsVolSpec> parse_bns(const RawScenario& raw, const std::string& name) {
    SectionReader sec(raw, name, false);
    if (!sec.present()) return std::nullopt;
    double lmr = sec.require_num("lambda_mr");
    double rate = sec.opt_num("jump_rate", 0.0);
    double mean = sec.opt_num("jump_mean", 0.0);
    bool stat = sec.opt_bool("stationary", false);
    double s0 = sec.opt_num("sigma0_sq", 0.0);
    sec.finish();
    try {
        return BnsVolSpec(lmr, rate, mean, s0, stat);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("[" + name + "]: " + e.what());
    }
}

}  // namespace detail

inline Scenario parse_scenario_text(const std::string& text, const std::string& base_dir = "") {
    using detail::SectionReader;
    detail::RawScenario raw = detail::tokenize_scenario(text, base_dir);
    static const std::set<std::string> known = {"levy",     "spot1",    "spot2", "option",
                                               "snapshot", "numerics", "vol1",  "vol2"};
    for (const auto& [name, kv] : raw.sections)
        if (!known.count(name)) throw ScenarioError("[" + name + "]: unknown section");

    BivariateLevySpec levy = detail::parse_levy(raw);
    SpotModelSpec spot1 = detail::parse_spot(raw, "spot1");
    SpotModelSpec spot2 = detail::parse_spot(raw, "spot2");

    SectionReader opt(raw, "option", true);
    double T = opt.require_num("maturity");
    double k = opt.require_num("heat_rate");
    double r = opt.opt_num("rate", 0.0);
    opt.finish();

    SectionReader snap(raw, "snapshot", true);
    double t = snap.opt_num("t", 0.0);
    double f1 = snap.require_num("f1");
    double f2 = snap.require_num("f2");
    snap.finish();

    SectionReader num(raw, "numerics", false);
    DampingConfig damping;
    QuadratureSpec quad;
    McConfig mc;
    std::int64_t n_paths = 200000;
    std::uint64_t seed = 1;
    if (num.present()) {
        double c = num.opt_num("damping", 1.5);
        try {
            damping = DampingConfig(c);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError(std::string("[numerics] damping: ") + e.what());
        }
        quad.rel_tol = num.opt_num("rel_tol", quad.rel_tol);
        quad.abs_tol = num.opt_num("abs_tol", quad.abs_tol);
        quad.y_max = num.opt_num("y_max", quad.y_max);
        quad.max_subdivisions =
            static_cast<int>(num.opt_int("max_subdivisions", quad.max_subdivisions));
        mc.steps_per_year = static_cast<int>(num.opt_int("steps_per_year", mc.steps_per_year));
        mc.hedge_fine_steps =
            static_cast<int>(num.opt_int("hedge_fine_steps", mc.hedge_fine_steps));
        n_paths = num.opt_int("paths", n_paths);
        seed = num.opt_uint("seed", seed);
        num.finish();
        if (!(quad.rel_tol > 0.0) || !(quad.abs_tol > 0.0))
            throw ScenarioError("[numerics] tolerances must be > 0");
        if (n_paths <= 0) throw ScenarioError("[numerics] paths: must be > 0");
        if (mc.steps_per_year < 1) throw ScenarioError("[numerics] steps_per_year: must be >= 1");
    }

    std::optional<BnsVolSpec> vol1 = detail::parse_bns(raw, "vol1");
    std::optional<BnsVolSpec> vol2 = detail::parse_bns(raw, "vol2");
    if (vol1.has_value() != vol2.has_value())
        throw ScenarioError("[vol1]/[vol2]: stochastic volatility needs both sections");
    if (vol1 && (spot1.vol != 1.0 || spot2.vol != 1.0))
        throw ScenarioError(
            "[spot1]/[spot2] vol: must be 1 under stochastic volatility (the variance "
            "process carries the level)");

    try {
        return Scenario{std::move(levy),
                        std::move(spot1),
                        std::move(spot2),
                        OptionTerms(T, k, r),
                        MarketSnapshot(t, f1, f2, T),
                        damping,
                        quad,
                        mc,
                        n_paths,
                        seed,
                        vol1,
                        vol2,
                        fnv1a64(text)};
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(std::string("[option]/[snapshot]: ") + e.what());
    }
}

inline Scenario parse_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("scenario: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string dir;
    std::size_t slash = path.find_last_of('/');
    if (slash != std::string::npos) dir = path.substr(0, slash);
    return parse_scenario_text(buf.str(), dir);
}

}
