#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "vmvspread/vmvspread.hpp"

using namespace vmvspread;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::string scn_path(const std::string& name) {
    return std::string(VMV_SCENARIO_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// minimal well-formed scenario used as the base for the rejection tests
std::string base_text(const std::string& extra = "", const std::string& numerics = "") {
    std::string t =
        "[levy]\n"
        "type = gaussian\n"
        "rho = 0.3\n"
        "[spot1]\n"
        "seasonality = constant\n"
        "level = 20.0\n"
        "kernel = ou\n"
        "scale = 1.0\n"
        "alpha = 1.5\n"
        "vol = 0.4\n"
        "[spot2]\n"
        "seasonality = constant\n"
        "level = 18.0\n"
        "kernel = ou\n"
        "scale = 1.0\n"
        "alpha = 1.0\n"
        "vol = 0.3\n"
        "[option]\n"
        "maturity = 0.75\n"
        "heat_rate = 1.0\n"
        "[snapshot]\n"
        "f1 = 21.0\n"
        "f2 = 19.0\n";
    if (!numerics.empty()) t += "[numerics]\n" + numerics;
    t += extra;
    return t;
}

int run_raw(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

int run_cli(const std::string& args) { return run_raw(std::string(VMV_CLI_BIN) + " " + args); }

}  // namespace

TEST_CASE("reference scenario parses to its documented values") {
    auto scn = parse_scenario(scn_path("margrabe.scn"));
    CHECK(scn.levy.kind() == BivariateLevySpec::Kind::Gaussian);
    CHECK(scn.levy.rho() == 0.3);
    CHECK(scn.levy.c1() == 1.0);
    CHECK(scn.levy.gamma1() == 0.0);
    CHECK(scn.spot1.seasonality.value(0.3) == 20.0);
    CHECK(scn.spot1.vol == 0.4);
    CHECK_THAT(scn.spot1.kernel.eval(1.0, 0.0), WithinRel(std::exp(-1.5), 1e-14));
    CHECK(scn.spot2.vol == 0.3);
    CHECK(scn.option.maturity == 0.75);
    CHECK(scn.option.heat_rate == 1.0);
    CHECK(scn.option.rate == 0.02);
    CHECK(scn.snapshot.t == 0.0);
    CHECK(scn.snapshot.f1 == 21.0);
    CHECK(scn.snapshot.f2 == 19.0);
    CHECK(scn.damping.c == 1.5);
    CHECK(scn.n_paths == 200000);
    CHECK(scn.seed == 42);
    CHECK_FALSE(scn.stochastic_vol());
    CHECK(scn.content_hash == 0xA991D894740393CFull);
}

TEST_CASE("stochastic volatility scenario parses both variance sections") {
    auto scn = parse_scenario(scn_path("bns_sv.scn"));
    REQUIRE(scn.stochastic_vol());
    CHECK(scn.vol1->lambda_mr == 2.0);
    CHECK(scn.vol1->jump_rate == 1.0);
    CHECK(scn.vol1->jump_mean == 0.08);
    CHECK(scn.vol1->sigma0_sq == 0.16);
    CHECK(scn.vol2->lambda_mr == 1.5);
    CHECK(scn.spot1.vol == 1.0);
    CHECK(scn.spot2.vol == 1.0);
}

TEST_CASE("tabulated kernel file resolves relative to the scenario") {
    auto scn = parse_scenario(scn_path("tabulated.scn"));
    CHECK(scn.spot1.kernel.kind() == KernelSpec::Kind::Tabulated);
    CHECK_THAT(scn.spot1.kernel.eval(1.0, 1.0), WithinRel(1.0, 1e-12));
    CHECK_THAT(scn.spot1.kernel.eval(1.0, 0.0), WithinRel(std::exp(-1.2), 1e-3));

    CHECK_THROWS_MATCHES(
        parse_scenario_text(base_text().replace(base_text().find("kernel = ou"), 11,
                                                "kernel = tabulated\nfile = missing_table.csv"),
                            VMV_SCENARIO_DIR),
        ScenarioError, Catch::Matchers::MessageMatches(ContainsSubstring("missing_table.csv")));
}

TEST_CASE("defaults fill in for omitted optional keys") {
    auto scn = parse_scenario_text(base_text());
    CHECK(scn.snapshot.t == 0.0);
    CHECK(scn.option.rate == 0.0);
    CHECK(scn.damping.c == 1.5);
    CHECK(scn.n_paths == 200000);
    CHECK(scn.seed == 1);
    CHECK(scn.mc.steps_per_year == 256);
}

TEST_CASE("full precision values survive parsing") {
    std::string t = base_text();
    t.replace(t.find("f1 = 21.0"), 9, "f1 = 21.123456789012345678");
    auto scn = parse_scenario_text(t);
    CHECK(scn.snapshot.f1 == 21.123456789012345678);
}

TEST_CASE("malformed scenarios are rejected with located messages") {
    auto reject = [](const std::string& text, const std::string& needle) {
        CHECK_THROWS_MATCHES(parse_scenario_text(text), ScenarioError,
                             Catch::Matchers::MessageMatches(ContainsSubstring(needle)));
    };

    SECTION("structure") {
        reject("c1 = 1.0\n", "outside any section");
        reject("[levy\ntype = gaussian\n", "unterminated");
        reject("[levy]\ntype\n", "key = value");
        std::string dup = base_text();
        dup.insert(dup.find("[spot1]"), "rho = 0.3\n");
        reject(dup, "duplicate key");
        reject(base_text("[mystery]\nx = 1\n"), "unknown section");
        std::string extra = base_text();
        extra.insert(extra.find("[spot1]"), "flavor = mild\n");
        reject(extra, "[levy] flavor: unknown key");
    }

    SECTION("missing pieces") {
        std::string t = base_text();
        t.erase(t.find("[levy]"), t.find("[spot1]"));
        reject(t, "[levy]: missing required section");
        std::string nf = base_text();
        nf.erase(nf.find("f1 = 21.0\n"), 10);
        reject(nf, "[snapshot] f1");
        std::string na = base_text();
        na.erase(na.find("alpha = 1.5\n"), 12);
        reject(na, "[spot1] alpha");
    }

    SECTION("bad values") {
        std::string t = base_text();
        t.replace(t.find("rho = 0.3"), 9, "rho = fast");
        reject(t, "[levy] rho");
        reject(base_text("", "damping = 0.9\n"), "damping");
        std::string hr = base_text();
        hr.replace(hr.find("heat_rate = 1.0"), 15, "heat_rate = -1.0");
        reject(hr, "heat rate");
        std::string late = base_text();
        late.replace(late.find("f1 = 21.0"), 9, "t = 2.0\nf1 = 21.0");
        reject(late, "maturity");
        reject(base_text("", "paths = 0\n"), "paths");
    }

    SECTION("stochastic volatility consistency") {
        reject(base_text("[vol1]\nlambda_mr = 2.0\njump_rate = 1.0\njump_mean = 0.1\n"
                         "sigma0_sq = 0.2\n"),
               "vol2");
        std::string sv = base_text(
            "[vol1]\nlambda_mr = 2.0\njump_rate = 1.0\njump_mean = 0.1\nsigma0_sq = 0.2\n"
            "[vol2]\nlambda_mr = 1.5\njump_rate = 1.0\njump_mean = 0.1\nsigma0_sq = 0.2\n");
        reject(sv, "must be 1");
    }
}

TEST_CASE("content hash is the standard 64-bit fnv-1a") {
    CHECK(fnv1a64("") == 0xCBF29CE484222325ull);
    CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8Cull);
    CHECK(fnv1a64("foobar") == 0x85944171F73967E8ull);
}

TEST_CASE("in-process command dispatch and exit codes") {
    std::string out = "/tmp/vmv_cli_test.csv";
    std::ostringstream err;

    SECTION("price writes a header and one data row") {
        cli::RunRequest req{"price", scn_path("margrabe.scn"), out, {}, {}, false};
        CHECK(cli::run_command(req, err) == 0);
        std::string csv = slurp(out);
        CHECK_THAT(csv, ContainsSubstring("# vmvspread " + std::string(version_string) +
                                          ", scenario=a991d894740393cf, seed=42\n"));
        CHECK_THAT(csv, ContainsSubstring("t,T,k,c,price,abs_err_est\n"));
        CHECK_THAT(csv, ContainsSubstring("\n0,0.75,1,1.5,3.03758157835"));
        CHECK(csv.back() == '\n');
        CHECK(csv.find('\r') == std::string::npos);
    }

    SECTION("forward reconstructs the observed forwards") {
        cli::RunRequest req{"forward", scn_path("margrabe.scn"), out, {}, {}, false};
        CHECK(cli::run_command(req, err) == 0);
        std::string csv = slurp(out);
        CHECK_THAT(csv, ContainsSubstring("leg,t,T,f_observed,x_state,ln_psi,f_reconstructed\n"));
        CHECK_THAT(csv, ContainsSubstring("1,0,0.75,21,"));
        CHECK_THAT(csv, ContainsSubstring(",21\n"));
        CHECK_THAT(csv, ContainsSubstring(",19\n"));
    }

    SECTION("hedge emits the solved positions") {
        cli::RunRequest req{"hedge", scn_path("margrabe.scn"), out, {}, {}, false};
        CHECK(cli::run_command(req, err) == 0);
        CHECK_THAT(slurp(out), ContainsSubstring("t,phi1,phi2,det,cond,residual\n"));
    }

    SECTION("validate passes on the reference scenario") {
        cli::RunRequest req{"validate", scn_path("margrabe.scn"), out, 30000, {}, false};
        CHECK(cli::run_command(req, err) == 0);
        std::string csv = slurp(out);
        CHECK_THAT(csv, ContainsSubstring("check,value,reference,tolerance,status\n"));
        CHECK_THAT(csv, ContainsSubstring("margrabe_rel_diff"));
        CHECK_THAT(csv, ContainsSubstring("mc_z_score"));
        CHECK(csv.find("fail") == std::string::npos);
    }

    SECTION("singular hedge system exits with code 3") {
        cli::RunRequest req{"hedge", scn_path("singular_hedge.scn"), out, {}, {}, false};
        CHECK(cli::run_command(req, err) == 3);
        CHECK_THAT(err.str(), ContainsSubstring("singular"));
    }

    SECTION("configuration failures exit with code 1") {
        cli::RunRequest missing{"price", scn_path("no_such.scn"), out, {}, {}, false};
        CHECK(cli::run_command(missing, err) == 1);
        cli::RunRequest unknown{"explode", scn_path("margrabe.scn"), out, {}, {}, false};
        CHECK(cli::run_command(unknown, err) == 1);
        cli::RunRequest badpaths{"simulate", scn_path("margrabe.scn"), out, -5, {}, false};
        CHECK(cli::run_command(badpaths, err) == 1);
        cli::RunRequest svprice{"price", scn_path("bns_sv.scn"), out, {}, {}, false};
        CHECK(cli::run_command(svprice, err) == 1);
        CHECK_THAT(err.str(), ContainsSubstring("simulate"));
    }

    SECTION("simulate prices the stochastic-volatility scenario") {
        cli::RunRequest req{"simulate", scn_path("bns_sv.scn"), out, 20000, {}, false};
        CHECK(cli::run_command(req, err) == 0);
        CHECK_THAT(slurp(out), ContainsSubstring("t,T,k,price,std_err,n_paths,seed\n"));
    }

    SECTION("seed override lands in the header") {
        cli::RunRequest req{"simulate", scn_path("margrabe.scn"), out, 1000, 777, false};
        CHECK(cli::run_command(req, err) == 0);
        CHECK_THAT(slurp(out), ContainsSubstring("seed=777"));
    }

    std::remove(out.c_str());
}

TEST_CASE("repeat runs are byte-identical") {
    std::string a = "/tmp/vmv_cli_rep_a.csv", b = "/tmp/vmv_cli_rep_b.csv";
    std::ostringstream err;
    for (const char* cmd : {"price", "hedge", "simulate"}) {
        cli::RunRequest ra{cmd, scn_path("merton_ou.scn"), a, 20000, {}, false};
        cli::RunRequest rb{cmd, scn_path("merton_ou.scn"), b, 20000, {}, false};
        REQUIRE(cli::run_command(ra, err) == 0);
        REQUIRE(cli::run_command(rb, err) == 0);
        CHECK(slurp(a) == slurp(b));
    }
    cli::RunRequest other{"simulate", scn_path("merton_ou.scn"), b, 20000, 99, false};
    REQUIRE(cli::run_command(other, err) == 0);
    CHECK(slurp(a) != slurp(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("installed binary behaves like the library entry point") {
    std::string out1 = "/tmp/vmv_bin_t1.csv", out2 = "/tmp/vmv_bin_t2.csv";

    SECTION("exit codes surface through the process boundary") {
        CHECK(run_cli("price --scenario " + scn_path("margrabe.scn") + " --out " + out1 +
                      " 2>/dev/null") == 0);
        CHECK(run_cli("hedge --scenario " + scn_path("singular_hedge.scn") +
                      " 2>/dev/null >/dev/null") == 3);
        CHECK(run_cli("price --scenario " + scn_path("no_such.scn") +
                      " 2>/dev/null >/dev/null") != 0);
    }

    SECTION("thread cap does not change the output bytes") {
        std::string base = "simulate --scenario " + scn_path("merton_ou.scn") +
                           " --paths 20000 --seed 5 --out ";
        CHECK(run_raw("env VMVSPREAD_THREADS=1 " + std::string(VMV_CLI_BIN) + " " + base + out1 +
                      " >/dev/null 2>&1") == 0);
        CHECK(run_raw("env VMVSPREAD_THREADS=3 " + std::string(VMV_CLI_BIN) + " " + base + out2 +
                      " >/dev/null 2>&1") == 0);
        CHECK(slurp(out1) == slurp(out2));
    }

    SECTION("path dump has the documented columns") {
        CHECK(run_cli("simulate --scenario " + scn_path("margrabe.scn") +
                      " --paths 2 --dump-paths --out " + out1 + " 2>/dev/null") == 0);
        std::string csv = slurp(out1);
        CHECK_THAT(csv, ContainsSubstring("path,step,t,u,v,sig1_sq,sig2_sq,x,y\n"));
        CHECK_THAT(csv, ContainsSubstring("\n0,"));
    }

    std::remove(out1.c_str());
    std::remove(out2.c_str());
}
