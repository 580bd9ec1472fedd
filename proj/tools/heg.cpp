// Command-line front end: heg {validate|vmc|measure|dmc} --config FILE [options]

#include "heg/config.hpp"
#include "heg/errors.hpp"
#include "heg/runner.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"Variational and diffusion Monte Carlo for the homogeneous electron gas"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> resume;
    std::optional<std::string> output;
    bool force = false;

    auto add_common = [&](CLI::App* sub, bool with_resume) {
        sub->add_option("--config", config_path, "YAML configuration file")->required();
        sub->add_option("--seed", seed, "master random seed");
        sub->add_option("--threads", threads, "maximum worker threads");
        sub->add_option("--output", output, "output directory");
        if (with_resume) {
            sub->add_option("--resume", resume, "checkpoint to continue from");
            sub->add_flag("--force", force, "accept a checkpoint from a different configuration");
        }
    };
    auto* validate = app.add_subcommand("validate", "parse a configuration and print it with defaults resolved");
    auto* vmc = app.add_subcommand("vmc", "optimize the neural wavefunction, then measure observables");
    auto* meas = app.add_subcommand("measure", "measure observables from a checkpoint without optimizing");
    auto* dmc = app.add_subcommand("dmc", "fixed-node diffusion Monte Carlo with a Slater-Jastrow trial");
    add_common(validate, false);
    add_common(vmc, true);
    add_common(meas, true);
    add_common(dmc, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : heg::kExitConfig;
    }

    try {
        heg::ExperimentConfig config = heg::load_config(config_path, heg::override_environment());
        if (seed) config.seed = *seed;
        if (threads) {
            if (*threads < 1) throw heg::ConfigError("--threads must be >= 1");
            config.threads = *threads;
        }
        if (output) config.output = *output;
        for (const auto& w : config.warnings) std::cerr << "warning: " << w << '\n';

        heg::RunOptions options{resume, force};
        if (validate->parsed()) {
            std::cout << heg::dump_config(config);
            return heg::kExitOk;
        }
        if (vmc->parsed()) return heg::run_vmc(config, options, std::cout);
        if (meas->parsed()) return heg::run_measure(config, options, std::cout);
        if (dmc->parsed()) return heg::run_dmc_command(config, std::cout);
    } catch (const heg::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return heg::kExitConfig;
    } catch (const heg::InvalidInput& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return heg::kExitConfig;
    } catch (const heg::Error& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return heg::kExitNumerical;
    }
    return heg::kExitOk;
}
