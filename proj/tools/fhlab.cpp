// fhlab <kind> --config <path> [--seed S] [--workers W] [--strict] [--out DIR]
//
// exit codes: 0 ok, 2 configuration error, 3 numerical divergence,
// 4 admissibility failure under --strict

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fhlab/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fluctuating hydrodynamics lab"};
    std::string kind, config_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    bool strict = false;
    std::string kinds;
    for (const auto& k : fhlab::experiment_kinds()) kinds += (kinds.empty() ? "" : ", ") + k;
    app.add_option("kind", kind, "experiment kind: " + kinds)->required();
    app.add_option("--config", config_path, "JSON experiment config")->required();
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--workers", workers, "worker threads (fallback: FHLAB_WORKERS, then 1)");
    app.add_flag("--strict", strict, "exit 4 when the schedule or audit is not admissible");
    app.add_option("--out", out_dir, "output directory");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        fhlab::RunOptions ro;
        ro.seed = seed;
        ro.workers = fhlab::resolve_workers(workers);
        ro.strict = strict;
        ro.out_dir = out_dir;
        const auto cfg = fhlab::parse_config_text(fhlab::read_text(config_path));
        const auto oc = fhlab::run_experiment(kind, cfg, ro);
        for (const auto& m : oc.messages) std::cerr << "fhlab: " << m << "\n";
        for (const auto& f : oc.files) std::cout << (std::filesystem::path(out_dir) / f).string() << "\n";
        return oc.exit_code;
    } catch (const fhlab::DivergenceError& e) {
        std::cerr << "fhlab: divergence: " << e.what() << "\n";
        return 3;
    } catch (const fhlab::ConfigError& e) {
        std::cerr << "fhlab: config error: " << e.what() << "\n";
        return 2;
    } catch (const fhlab::DomainError& e) {
        std::cerr << "fhlab: config error: " << e.what() << "\n";
        return 2;
    } catch (const fhlab::ResolutionError& e) {
        std::cerr << "fhlab: config error: " << e.what() << "\n";
        return 2;
    } catch (const fhlab::ArityError& e) {
        std::cerr << "fhlab: config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fhlab: error: " << e.what() << "\n";
        return 1;
    }
}
