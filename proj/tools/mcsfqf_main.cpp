#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcsfqf/cli.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    bool has_seed = false, has_steps = false, has_out = false, has_mode = false;
    std::uint64_t seed = 0, steps = 0;
    std::string out, mode;
};

mcsfqf::RunConfig resolve_config(const CommonOpts& c) {
    mcsfqf::RunConfig cfg;
    if (!c.config_path.empty()) cfg = mcsfqf::RunConfig::from_file(c.config_path);
    cfg.apply_overrides(c.overrides);
    if (c.has_seed) cfg.seed = c.seed;
    if (c.has_steps) cfg.steps = c.steps;
    if (c.has_out) cfg.out = c.out;
    if (c.has_mode) cfg.mode = c.mode;
    return cfg;
}

void add_common(CLI::App* app, CommonOpts& c) {
    app->add_option("--config", c.config_path, "run configuration file (key=value lines)");
    app->add_option("--set", c.overrides, "override a config key (KEY=VALUE, repeatable)");
    app->add_option("--seed", c.seed, "run seed")->each([&](const std::string&) {
        c.has_seed = true;
    });
    app->add_option("--steps", c.steps, "training step budget")->each([&](const std::string&) {
        c.has_steps = true;
    });
    app->add_option("--out", c.out, "output directory")->each([&](const std::string&) {
        c.has_out = true;
    });
    app->add_option("--mode", c.mode, "model variant: mcs-fqf | s-fqf-pop | s-fqf")
        ->each([&](const std::string&) { c.has_mode = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spiking distributional RL engine"};
    app.require_subcommand(1);

    CommonOpts train_opts, verify_opts;
    std::string eval_checkpoint;
    int eval_episodes = 10;
    std::uint64_t eval_seed = 0;
    mcsfqf::InspectOptions inspect_opts;

    CLI::App* train = app.add_subcommand("train", "train an agent");
    add_common(train, train_opts);

    CLI::App* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
    eval->add_option("--episodes", eval_episodes, "number of greedy episodes");
    eval->add_option("--seed", eval_seed, "evaluation seed");

    CLI::App* verify = app.add_subcommand("verify", "run the oracle verification suite");
    add_common(verify, verify_opts);

    CLI::App* inspect = app.add_subcommand("inspect", "dump neuron traces from a checkpoint");
    inspect->add_option("--checkpoint", inspect_opts.checkpoint_path, "checkpoint path")
        ->required();
    inspect->add_option("--traces", inspect_opts.traces_path, "output CSV for dendrite/soma traces");
    inspect->add_option("--pop-raster", inspect_opts.pop_raster_path,
                        "optional output CSV for the population spike raster");
    inspect->add_option("--neurons", inspect_opts.neurons, "number of units to sample");
    inspect->add_option("--fraction", inspect_opts.fraction, "fraction index to trace");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? mcsfqf::kExitOk : mcsfqf::kExitUsage;
    }

    try {
        if (train->parsed()) return mcsfqf::cmd_train(resolve_config(train_opts));
        if (eval->parsed()) return mcsfqf::cmd_eval(eval_checkpoint, eval_episodes, eval_seed);
        if (verify->parsed()) return mcsfqf::cmd_verify(resolve_config(verify_opts));
        if (inspect->parsed()) return mcsfqf::cmd_inspect(inspect_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mcsfqf::kExitUsage;
    }
    return mcsfqf::kExitUsage;
}
