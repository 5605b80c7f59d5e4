// geobeam: run experiment configs and summarise artifact directories.
#include "geobeam/experiments.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_assertion = 1;
constexpr int exit_usage = 2;

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Gaussian beam, CGO, Carleman, boundary and holonomy experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    int workers = 0;
    std::int64_t seed = -1;
    std::string out;
    app.add_option("--workers", workers, "worker threads (0: hardware concurrency)")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", seed, "override the config seed")->check(CLI::NonNegativeNumber);
    app.add_option("--out", out, "artifact directory for run");

    auto* run = app.add_subcommand("run", "run an experiment config");
    std::string config;
    run->add_option("config", config, "experiment config (key = value)")->required();

    auto* rep = app.add_subcommand("report", "summarise an artifact directory");
    std::string dir;
    rep->add_option("dir", dir, "artifact directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*run) {
            auto cfg = geobeam::load_config(config);
            geobeam::RunOptions opt;
            opt.out_dir = out;
            opt.workers = workers;
            if (seed >= 0)
                opt.seed = static_cast<std::uint64_t>(seed);
            auto res = geobeam::run_experiment(cfg, opt);
            for (const auto& a : res.assertions)
                std::printf("%s %s: %.6g %s %.6g\n", a.pass ? "pass" : "FAIL", a.name.c_str(), a.value,
                            a.relation.c_str(), a.threshold);
            std::printf("artifacts: %s\n", res.dir.c_str());
            return res.passed() ? exit_ok : exit_assertion;
        }
        std::cout << geobeam::report(dir);
        return exit_ok;
    } catch (const geobeam::UsageError& e) {
        std::cerr << "geobeam: " << e.what() << "\n";
        return exit_usage;
    } catch (const geobeam::ConfigurationError& e) {
        std::cerr << "geobeam: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "geobeam: " << e.what() << "\n";
        return exit_assertion;
    }
}
