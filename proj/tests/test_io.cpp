#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ldl/commands.hpp"
#include "ldl/config.hpp"
#include "ldl/io.hpp"

using namespace ldl;
namespace fs = std::filesystem;

namespace {

const std::string config_dir = LDL_CONFIG_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ldl_test_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig quick_two_bank() {
    RunConfig cfg = parse_config(config_dir + "/tab1.ini", EnvMap{});
    cfg.numerics.nodes = {30};
    cfg.numerics.dtau = 0.05;
    cfg.mc.paths = 2000;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LDL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(FieldCsv, RoundTripIsLossless) {
    const fs::path dir = scratch("csv");
    NdField f({3, 4});
    std::vector<double> x{1.0 / 3.0, 2.5, 1e10 / 7.0}, y{0.1, 0.2, 0.30000000000000004, 4.0};
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = std::exp(-static_cast<double>(k) / 3.0) / 7.0;
    write_field_csv(dir / "f.csv", {x, y}, f);
    const auto rows = read_csv_rows(dir / "f.csv");
    ASSERT_EQ(rows.size(), f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
        const Index3 idx = f.unravel(k);
        EXPECT_EQ(rows[k][0], x[idx[0]]);
        EXPECT_EQ(rows[k][1], y[idx[1]]);
        EXPECT_NEAR(rows[k][2], f[k], 1e-15);
    }
    EXPECT_EQ(slurp(dir / "f.csv").substr(0, 8), "a1,a2,q\n");
}

TEST(FieldCsv, ShapeMismatchRejected) {
    const fs::path dir = scratch("csv_bad");
    EXPECT_THROW(write_field_csv(dir / "f.csv", {{1.0, 2.0}}, NdField({3})), DomainError);
}

TEST(Commands, RepeatedRunsAreByteIdentical) {
    const RunConfig cfg = quick_two_bank();
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    std::ostringstream log;
    ASSERT_EQ(run_command(cfg, "joint", a, log), ExitCode::ok);
    ASSERT_EQ(run_command(cfg, "joint", b, log), ExitCode::ok);
    EXPECT_EQ(slurp(a / "joint.csv"), slurp(b / "joint.csv"));
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    EXPECT_TRUE(fs::exists(a / "timings.json"));
}

TEST(Commands, ManifestRecordsResolvedParameters) {
    RunConfig cfg = parse_config(config_dir + "/tab3d.ini", EnvMap{});
    const auto m = base_manifest(cfg, "joint");
    EXPECT_EQ(m["version"], version);
    EXPECT_EQ(m["config_hash"], config_hash(cfg));
    EXPECT_NEAR(m["resolved"]["rho_xy"].get<double>(), 0.4053, 5e-5);
    EXPECT_EQ(m["resolved"]["bank"].size(), 3u);
    EXPECT_TRUE(m["resolved"]["bank"][0].contains("raised_after_default"));
    cfg.numerics.dtau = 0.05;
    EXPECT_NE(config_hash(cfg), m["config_hash"].get<std::string>());
}

TEST(Commands, DeltaWithoutLiabilitiesIsZero) {
    RunConfig cfg = quick_two_bank();
    cfg.portfolio.liabilities = {{0, 0}, {0, 0}};
    const fs::path dir = scratch("delta0");
    std::ostringstream log;
    ASSERT_EQ(run_command(cfg, "delta", dir, log), ExitCode::ok);
    for (const char* f : {"delta_joint.csv", "delta_marginal.csv"})
        for (const auto& row : read_csv_rows(dir / f)) EXPECT_EQ(row.back(), 0.0) << f;
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m["joint"]["sup_abs"].get<double>(), 0.0);
}

TEST(Commands, MarginalAndConvergeWriteOutputs) {
    const RunConfig cfg = quick_two_bank();
    std::ostringstream log;
    const fs::path m = scratch("marg"), c = scratch("conv");
    ASSERT_EQ(run_command(cfg, "marginal", m, log), ExitCode::ok);
    EXPECT_TRUE(fs::exists(m / "marginal.csv"));
    ASSERT_EQ(run_command(cfg, "converge", c, log), ExitCode::ok);
    EXPECT_TRUE(fs::exists(c / "converge.csv"));
    const auto man = nlohmann::json::parse(slurp(c / "manifest.json"));
    EXPECT_EQ(man["temporal"]["values"].size(), 3u);
}

TEST(Commands, OracleAgreesOnClosedFormCase) {
    RunConfig cfg = parse_config(config_dir + "/tab1dD.ini", EnvMap{});
    cfg.mc.paths = 20000;
    const fs::path dir = scratch("oracle");
    std::ostringstream log;
    EXPECT_EQ(run_command(cfg, "oracle", dir, log), ExitCode::ok) << log.str();
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_LT(m["analytic"]["max_relative_error"].get<double>(), 1e-2);
    EXPECT_TRUE(fs::exists(dir / "relative_error.csv"));
}

TEST(Commands, ExitCodes) {
    RunConfig cfg = quick_two_bank();
    std::ostringstream log;
    EXPECT_EQ(run_command(cfg, "frobnicate", scratch("bad_cmd"), log), ExitCode::config_invalid);
    RunConfig three = parse_config(config_dir + "/tab3d.ini", EnvMap{});
    EXPECT_EQ(run_command(three, "marginal", scratch("bad_marg"), log), ExitCode::config_invalid);
    cfg.numerics.iteration.picard_max = 1;
    cfg.numerics.iteration.picard_tol = 1e-300;
    EXPECT_EQ(run_command(cfg, "joint", scratch("nonconv"), log), ExitCode::non_convergence);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    EXPECT_EQ(run_cli("--bogus"), 1);
    EXPECT_EQ(run_cli("--config " + config_dir + "/tab1.ini --command nope"), 1);
    std::ofstream(dir / "bad.ini") << "[portfolio]\nmaturity = 1\n";
    EXPECT_EQ(run_cli("--config " + (dir / "bad.ini").string()), 2);
    EXPECT_EQ(run_cli("--config " + config_dir + "/tab1.ini --bank 3"), 2);
    EXPECT_EQ(run_cli("--config " + config_dir + "/tab1dD.ini --out-dir " + (dir / "ok").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "ok" / "joint.csv"));
}
