#include "radner/error.hpp"
#include "radner/pipeline.hpp"
#include "radner/scenario.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <regex>

int main(int argc, char** argv) {
    CLI::App app{"Negishi-weight equilibrium solver: validate, solve, price, check, report"};
    std::string scenario_path;
    radner::RunOptions opt;
    std::uint64_t seed = 0;
    std::size_t paths = 0;
    std::string grid;
    app.add_option("--scenario", scenario_path, "scenario YAML file")->required()->check(CLI::ExistingFile);
    app.add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "override the scenario seed");
    auto* paths_opt = app.add_option("--paths", paths, "override the Monte Carlo path count");
    app.add_option("--grid", grid, "override the PDE grid as <nt>x<nx>");
    app.add_option("--command", opt.command, "stage to run up to")
        ->check(CLI::IsMember({"validate", "solve", "price", "check", "report", "all"}))
        ->capture_default_str();
    app.add_option("--threads", opt.threads, "worker threads (default: RADNER_THREADS or hardware)");
    app.add_flag("--keep-going", opt.keep_going, "continue after a failed stage when its outputs exist");
    CLI11_PARSE(app, argc, argv);

    if (*seed_opt) opt.seed = seed;
    if (*paths_opt) opt.paths = paths;
    if (!grid.empty()) {
        std::smatch m;
        if (!std::regex_match(grid, m, std::regex(R"((\d+)x(\d+))"))) {
            fmt::print(stderr, "error: --grid expects <nt>x<nx>, got '{}'\n", grid);
            return 2;
        }
        opt.nt = std::stoul(m[1]);
        opt.nx = std::stoul(m[2]);
    }

    try {
        radner::Pipeline pipeline(radner::load_scenario(scenario_path), opt);
        const int code = pipeline.run();
        for (const auto& s : pipeline.stages()) {
            fmt::print("{:<9} {}  {:.2f}s  {}\n", s.name, s.pass ? "pass" : "FAIL", s.seconds, s.message);
        }
        return code;
    } catch (const radner::ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
