#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rbsde/cli.hpp"

int main(int argc, char** argv) {
    rbsde::CliOptions options;
    CLI::App app{"Reflected BSDEs driven by a marked point process on scenario trees"};
    app.require_subcommand(1);

    std::string config, out;
    std::uint64_t seed = 0;
    int threads = 1;
    double tolerance = 0.0;
    std::size_t cap_nodes = 0;

    const std::vector<std::pair<const char*, const char*>> commands{
        {"validate", "check the generator against its declared assumptions"},
        {"solve", "solve the (reflected) BSDE and write the solution CSV"},
        {"snell", "compare the solver with the optimal-stopping oracle"},
        {"check", "run the comparison, bound, moment and truncation checks"},
        {"ladder", "run the approximation ladder"},
        {"price", "price a European or American claim"},
        {"plotdata", "turn result CSVs into plot-ready bundles"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--tolerance", tolerance, "probability tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--cap-nodes", cap_nodes, "maximum tree size")->check(CLI::PositiveNumber);
        sub->add_flag("--timings", options.timings, "add wallclock columns to CSVs");
        sub->add_flag("--dump-tree", options.dump_tree, "write tree.csv with one row per node");
        sub->callback([&options, name = std::string(name)] { options.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : rbsde::exit_config;
    }

    for (const CLI::App* sub : app.get_subcommands()) {
        if (sub->count("--config")) options.config = config;
        if (sub->count("--out")) options.out = out;
        if (sub->count("--seed")) options.seed = seed;
        if (sub->count("--threads")) options.threads = threads;
        if (sub->count("--tolerance")) options.tolerance = tolerance;
        if (sub->count("--cap-nodes")) options.cap_nodes = cap_nodes;
    }
    options.versions["cli11"] = CLI11_VERSION;
    return rbsde::run_command(options, std::cout, std::cerr);
}
