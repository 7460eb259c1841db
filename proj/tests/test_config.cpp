#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "fixtures.hpp"
#include "ldl/config.hpp"

using namespace ldl;

namespace {

const std::string config_dir = LDL_CONFIG_DIR;

const char* minimal = R"(
[portfolio]
maturity = 1

[rate]
rates = 0.05

[bank.1]
a0 = 100
l0 = 40
recovery = 1
sigma = 0.2
)";

std::string error_of(const std::string& text) {
    try {
        parse_config_string(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

std::string replaced(std::string text, const std::string& from, const std::string& to) {
    text.replace(text.find(from), from.size(), to);
    return text;
}

}  // namespace

TEST(Config, ShippedTwoBankFileMatchesFixture) {
    const RunConfig cfg = parse_config(config_dir + "/tab1.ini", EnvMap{});
    EXPECT_EQ(cfg.portfolio, ldl::testing::tab1());
    EXPECT_EQ(cfg.bank, 0u);
    ASSERT_EQ(cfg.probes.size(), 3u);
    EXPECT_EQ(cfg.probes[1], (std::vector<double>{90, 95}));
    EXPECT_EQ(cfg.numerics.nodes, std::vector<std::size_t>{100});
    EXPECT_TRUE(cfg.mc.antithetic);
}

TEST(Config, ThreeBankCosineLaw) {
    const RunConfig cfg = parse_config(config_dir + "/tab3d.ini", EnvMap{});
    EXPECT_NEAR(cfg.portfolio.corr.rho[0][1], 0.4053, 5e-5);
    EXPECT_NEAR(cfg.portfolio.corr.rho[1][0], cfg.portfolio.corr.rho[0][1], 0.0);
    ASSERT_TRUE(cfg.cosine_law.has_value());
    EXPECT_DOUBLE_EQ((*cfg.cosine_law)[0], 0.5);
}

TEST(Config, ShippedFilesParse) {
    for (const char* f : {"tab1dD.ini", "tabcomp.ini", "tab1.ini", "tab1_locvol.ini", "tab3d.ini"})
        EXPECT_NO_THROW(parse_config(config_dir + "/" + f, EnvMap{})) << f;
    const RunConfig lv = parse_config(config_dir + "/tab1_locvol.ini", EnvMap{});
    EXPECT_TRUE(lv.portfolio.banks[0].local_vol.has_value());
}

TEST(Config, MinimalDefaults) {
    const RunConfig cfg = parse_config_string(minimal);
    EXPECT_EQ(cfg.portfolio, ldl::testing::one_bank());
    EXPECT_TRUE(cfg.probes.empty());
}

TEST(Config, MissingRecoveryIsNamed) {
    const std::string err = error_of(replaced(minimal, "recovery = 1\n", ""));
    EXPECT_NE(err.find("[bank.1].recovery"), std::string::npos) << err;
}

TEST(Config, KouThetaBoundIsCited) {
    const std::string text = std::string(minimal) +
                             "\n[correlation]\nb1 = 0.2\n\n[jumps.common]\nmodel = kou\nintensity = 3\np = 0.3\n"
                             "theta1 = 0.9\ntheta2 = 3\n";
    const std::string err = error_of(text);
    EXPECT_NE(err.find("theta1 > 1"), std::string::npos) << err;
    EXPECT_NE(err.find(":21"), std::string::npos) << err;
}

TEST(Config, UnknownKeyReportsLine) {
    const std::string err = error_of(replaced(minimal, "sigma = 0.2", "sigma = 0.2\nsigmma = 0.3"));
    EXPECT_NE(err.find("<string>:13"), std::string::npos) << err;
    EXPECT_NE(err.find("sigmma"), std::string::npos) << err;
}

TEST(Config, UnknownSectionRejected) {
    const std::string err = error_of(std::string(minimal) + "\n[bankz]\nx = 1\n");
    EXPECT_NE(err.find("unknown section [bankz]"), std::string::npos) << err;
}

TEST(Config, DuplicatesRejected) {
    EXPECT_NE(error_of(replaced(minimal, "l0 = 40", "l0 = 40\nl0 = 41")).find("duplicate key"), std::string::npos);
    EXPECT_NE(error_of(std::string(minimal) + "\n[rate]\nrates = 0.01\n").find("duplicate section"),
              std::string::npos);
}

TEST(Config, InvalidValuesRejected) {
    EXPECT_FALSE(error_of(replaced(minimal, "recovery = 1", "recovery = 1.5")).empty());
    EXPECT_FALSE(error_of(replaced(minimal, "sigma = 0.2", "sigma = abc")).empty());
    EXPECT_FALSE(error_of(replaced(minimal, "maturity = 1", "maturity = 0")).empty());
    EXPECT_FALSE(error_of(std::string(minimal) + "\n[numerics]\nsolver = lu\n").empty());
    EXPECT_FALSE(error_of(std::string(minimal) + "\n[numerics]\nnodes = 4\n").empty());
}

TEST(Config, RoundTripIsLossless) {
    for (const char* f : {"tab1.ini", "tab3d.ini", "tabcomp.ini", "tab1_locvol.ini"}) {
        const RunConfig a = parse_config(config_dir + "/" + f, EnvMap{});
        const RunConfig b = parse_config_string(serialize_config(a));
        EXPECT_TRUE(a == b) << f;
        EXPECT_EQ(serialize_config(a), serialize_config(b)) << f;
    }
}

TEST(Config, EnvironmentOverrides) {
    const EnvMap env{{"LDL_NUMERICS__DTAU", "0.005"},
                     {"LDL_BANK_1__SIGMA", "0.25"},
                     {"LDL_JUMPS_COMMON__INTENSITY", "2"},
                     {"PATH", "/usr/bin"}};
    const RunConfig cfg = parse_config(config_dir + "/tab1.ini", env);
    EXPECT_DOUBLE_EQ(cfg.numerics.dtau, 0.005);
    EXPECT_DOUBLE_EQ(cfg.portfolio.banks[0].sigma, 0.25);
    EXPECT_DOUBLE_EQ(std::get<KouJumps>(cfg.portfolio.corr.common).intensity, 2.0);
    const std::string err = [&] {
        try {
            parse_config(config_dir + "/tab1.ini", EnvMap{{"LDL_NUMERICS__BOGUS", "1"}});
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    }();
    EXPECT_NE(err.find("env LDL_NUMERICS__BOGUS"), std::string::npos) << err;
}

TEST(Config, PiSuffixAndProbes) {
    const RunConfig cfg =
        parse_config_string(std::string(minimal) + "\n[run]\nprobes = 50; 60; 70\n\n[numerics]\ntheta = 0.25pi\n");
    EXPECT_NEAR(cfg.numerics.scheme.theta, 0.25 * 3.14159265358979, 1e-12);
    EXPECT_EQ(cfg.probes.size(), 3u);
}

TEST(Config, MissingFile) { EXPECT_THROW(parse_config(config_dir + "/absent.ini", EnvMap{}), ConfigError); }
