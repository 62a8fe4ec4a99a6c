// cdanse command line front end.
//
//   cdanse run <config.json> [--set key.path=value ...] [--workers N] [--out DIR]
//
// Exit codes: 0 success, 2 config error, 3 I/O error.

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cdanse/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"steady Navier-Stokes solver with coarse-mesh nudging"};
    app.set_version_flag("--version", std::string(cdanse::kVersion));
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment described by a JSON config");
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> sets;
    int workers = 1;
    run->add_option("config", config_path, "JSON config file")->required();
    run->add_option("--set", sets, "override a config entry, e.g. --set solver.max_iter=50");
    run->add_option("--workers", workers, "worker threads for independent sweep cells");
    run->add_option("--out", out_dir, "output directory (overrides the config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        std::ifstream f(config_path);
        if (!f) throw cdanse::IoError("cannot read config file: " + config_path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(f, nullptr, true, /*ignore_comments=*/true);
        } catch (const nlohmann::json::parse_error& e) {
            throw cdanse::ConfigError(std::string("config parse error: ") + e.what());
        }
        for (const auto& s : sets) cdanse::apply_override(doc, s);
        cdanse::ExperimentConfig cfg = cdanse::parse_experiment_config(doc);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (workers < 1) throw cdanse::ConfigError("config error: --workers must be >= 1");
        cdanse::run_experiment(cfg, workers, &std::cout);
    } catch (const cdanse::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const cdanse::IoError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
