// rml_sampler: run, compare and export RML posterior-sampling experiments.

#include <iostream>

#include <CLI11.hpp>

#include <rmlbo/cli.hpp>

namespace {

void add_common(CLI::App* cmd, rmlbo::cli::Options& opts)
{
    cmd->add_option("--config", opts.config_path, "Experiment config (JSON)")->required();
    cmd->add_option("--seed", opts.seed, "Master seed (overrides the config)");
    cmd->add_option("--set", opts.sets, "Override a config key, KEY=VALUE (repeatable)")->take_all();
    cmd->add_option("--out", opts.out_dir, "Output directory");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"RML posterior sampling with high-dimensional Bayesian optimization"};
    app.require_subcommand(1);

    rmlbo::cli::Options opts;
    auto* run = app.add_subcommand("run", "Run one method on one problem");
    auto* compare = app.add_subcommand("compare", "Budget curves for several methods over trials");
    auto* landscape = app.add_subcommand("export-landscape", "Export active-subspace projections");
    for (auto* cmd : {run, compare, landscape})
        add_common(cmd, opts);

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        return rmlbo::cli::kExitConfig;
    }

    if (run->parsed())
        return rmlbo::cli::cmd_run(opts, std::cout, std::cerr);
    if (compare->parsed())
        return rmlbo::cli::cmd_compare(opts, std::cout, std::cerr);
    return rmlbo::cli::cmd_export_landscape(opts, std::cout, std::cerr);
}
