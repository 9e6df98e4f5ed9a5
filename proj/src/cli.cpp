#include "lwp/experiment.hpp"

#include <iostream>

#include <CLI11.hpp>

namespace lwp::cli {

namespace {

int run_gen(const std::string& generator, const StreamSpec& spec, std::uint64_t seed, const std::string& out) {
    StreamSpec s = spec;
    s.generator = generator;
    s.seed = seed;
    const tasks::TaskStream stream = build_stream(s, seed);
    tasks::write_csv_stream(stream, out);
    std::cout << "wrote " << stream.size() << " task files to " << out << '\n';
    return 0;
}

}  // namespace

int main_entry(int argc, char** argv) {
    CLI::App app{"Continual multitask learning with representation preservation"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run every (mode, seed) cell of an experiment config");
    run->add_option("config", config_path, "Experiment config file")->required();

    std::string results_dir;
    auto* plot = app.add_subcommand("plot", "Regenerate SVG plots from a results directory");
    plot->add_option("results", results_dir, "Results directory written by `run`")->required();

    std::string generator, out;
    std::uint64_t seed = 0;
    std::string order = "circles_first";
    StreamSpec spec;
    auto* gen = app.add_subcommand("gen", "Dump a synthetic task stream to CSV");
    gen->add_option("generator", generator, "toy | attribute | shift")
        ->required()
        ->check(CLI::IsMember({"toy", "attribute", "shift"}));
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--n", spec.n, "Samples per task");
    gen->add_option("--noise", spec.noise, "Toy input jitter");
    gen->add_option("--order", order, "Toy task order")->check(CLI::IsMember({"circles_first", "xor_first"}));
    gen->add_option("--dim", spec.dim, "Input dimension");
    gen->add_option("--tasks", spec.tasks, "Number of tasks");
    gen->add_option("--components", spec.components, "Mixture components");
    gen->add_option("--shift-scale", spec.shift_scale, "Per-task covariate shift");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            const ExperimentConfig cfg = load_config(config_path);
            run_experiment(cfg);
            std::cout << "results written to " << cfg.output.string() << '\n';
            return 0;
        }
        if (*plot) {
            for (const auto& p : plot_results(results_dir)) std::cout << p.string() << '\n';
            return 0;
        }
        if (*gen) {
            spec.order = order == "xor_first" ? tasks::ToyOrder::xor_first : tasks::ToyOrder::circles_first;
            return run_gen(generator, spec, seed, out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return 2;
    } catch (const ValueError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace lwp::cli
