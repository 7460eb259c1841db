#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ldl/commands.hpp"
#include "ldl/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Joint and marginal survival of banks with mutual liabilities"};
    std::string config_path, command = "joint", out_dir = "out";
    std::size_t bank = 0, workers = 0;
    std::uint64_t seed = 0;
    bool paper_literal = false;
    app.add_option("--config", config_path, "INI configuration")->required()->check(CLI::ExistingFile);
    app.add_option("--command", command, "joint | marginal | delta | converge | oracle")
        ->check(CLI::IsMember({"joint", "marginal", "delta", "converge", "oracle"}));
    app.add_option("--out-dir", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "Monte Carlo seed");
    auto* workers_opt = app.add_option("--workers", workers, "Monte Carlo worker threads")->check(CLI::PositiveNumber);
    auto* bank_opt = app.add_option("--bank", bank, "bank for marginal survival (1-based)")->check(CLI::PositiveNumber);
    app.add_flag("--paper-literal-j12", paper_literal, "use the common-jump generator without compensation");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ldl::ExitCode::usage);
    }

    ldl::RunConfig cfg;
    try {
        cfg = ldl::parse_config(config_path);
        if (*seed_opt) cfg.mc.seed = seed;
        if (*workers_opt) cfg.mc.workers = workers;
        if (*bank_opt) {
            if (bank > cfg.portfolio.size()) throw ldl::ConfigError("--bank out of range");
            cfg.bank = bank - 1;
        }
        if (paper_literal) cfg.numerics.paper_literal_j12 = true;
    } catch (const ldl::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return static_cast<int>(ldl::ExitCode::config_invalid);
    }
    return static_cast<int>(ldl::run_command(cfg, command, out_dir, std::cerr));
}
