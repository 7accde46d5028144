#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

#include <vmvspread/cli.hpp>
#include <vmvspread/version.hpp>

int main(int argc, char** argv) {
    CLI::App app{"Spread option pricing and hedging on two-factor Volterra spot models"};
    app.set_version_flag("--version", std::string("vmvspread ") + vmvspread::version_string);
    app.require_subcommand(1);

    vmvspread::cli::RunRequest req;
    std::int64_t paths = 0;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--scenario", req.scenario_path, "scenario file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", req.out_path, "output CSV path (default: stdout)");
        sub->add_option("--seed", seed, "override the scenario seed");
    };

    CLI::App* price = app.add_subcommand("price", "Fourier price at the snapshot");
    CLI::App* forward = app.add_subcommand("forward", "forward state inversion round trip");
    CLI::App* hedge = app.add_subcommand("hedge", "quadratic hedge ratios at the snapshot");
    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo price estimate");
    CLI::App* validate = app.add_subcommand("validate", "internal consistency checks");
    for (CLI::App* sub : {price, forward, hedge, simulate, validate}) add_common(sub);
    for (CLI::App* sub : {simulate, validate})
        sub->add_option("--paths", paths, "override the scenario path count")
            ->check(CLI::PositiveNumber);
    simulate->add_flag("--dump-paths", req.dump, "emit per-step path states instead of a summary");

    CLI11_PARSE(app, argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    req.command = sub->get_name();
    if (const CLI::Option* o = sub->get_option_no_throw("--paths"); o && o->count())
        req.paths = paths;
    if (const CLI::Option* o = sub->get_option_no_throw("--seed"); o && o->count()) req.seed = seed;
    return vmvspread::cli::run_command(req);
}
