#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "ldl/config.hpp"
#include "ldl/model.hpp"
#include "ldl/oracle.hpp"

using namespace ldl;
using ldl::testing::tab1;
using ldl::testing::tab3d;

TEST(GrowthFactor, ZeroRate) { EXPECT_DOUBLE_EQ(growth_factor(RateCurve::constant(0.0), 1.0), 1.0); }

TEST(GrowthFactor, ConstantRate) {
    EXPECT_NEAR(growth_factor(RateCurve::constant(0.05), 1.0), std::exp(0.05), 1e-15);
    EXPECT_NEAR(growth_factor(RateCurve::constant(0.05), 1.0), 1.051271, 1e-6);
}

TEST(GrowthFactor, PiecewiseRate) {
    RateCurve r{{0.5}, {0.05, 0.03}};
    EXPECT_NEAR(growth_factor(r, 1.0), std::exp(0.04), 1e-15);
    EXPECT_NEAR(growth_factor(r, 0.25), std::exp(0.0125), 1e-15);
}

TEST(GrowthFactor, NegativeTimeIsDomainError) {
    EXPECT_THROW(growth_factor(RateCurve::constant(0.05), -0.1), DomainError);
}

TEST(DefaultBarrier, Tab1PreMaturity) { EXPECT_NEAR(default_barrier(0, tab1(), 0.0, false), 21.0, 1e-12); }

TEST(DefaultBarrier, Tab1AtMaturity) {
    EXPECT_NEAR(default_barrier(0, tab1(), 1.0, true), 75.0 * std::exp(0.05), 1e-12);
}

TEST(DefaultBarrier, NoMutualLiabilities) {
    EXPECT_NEAR(default_barrier(0, ldl::testing::one_bank(), 0.0, false), 40.0, 1e-12);
}

TEST(DefaultBarrier, ScalesWithGrowth) {
    const Portfolio p = tab1();
    for (double t : {0.1, 0.4, 0.9})
        EXPECT_NEAR(default_barrier(1, p, t, false), default_barrier(1, p, 0.0, false) * growth_factor(p.rate, t),
                    1e-12);
}

TEST(BarrierJump, FullRecoveryCancels) {
    Portfolio p = tab1();
    p.banks[0].recovery = 1.0;
    p.banks[1].recovery = 1.0;
    EXPECT_NEAR(barrier_jump_on_default(p, 0, 1, 0.0), 0.0, 1e-12);
}

TEST(BarrierJump, Tab1Survivor1) { EXPECT_NEAR(barrier_jump_on_default(tab1(), 0, 1, 0.0), 12.9, 1e-12); }

TEST(BarrierJump, Tab1Survivor2) { EXPECT_NEAR(barrier_jump_on_default(tab1(), 1, 0, 0.0), 8.6, 1e-12); }

TEST(BarrierJump, MonotoneAndNonnegative) {
    Portfolio p = tab1();
    double prev = -1.0;
    for (double l : {0.0, 5.0, 10.0, 20.0, 40.0}) {
        p.liabilities[1][0] = l;
        const double d = barrier_jump_on_default(p, 0, 1, 0.0);
        EXPECT_GE(d, 0.0);
        EXPECT_GT(d, prev);
        prev = d;
    }
}

TEST(BarrierJump, RaisedScheduleMatchesIncrement) {
    const Portfolio p = tab1();
    const Portfolio after = after_default(p, 1);
    EXPECT_NEAR(pre_maturity_level(after, 0) - pre_maturity_level(p, 0), barrier_jump_on_default(p, 0, 1, 0.0),
                1e-12);
}

TEST(Correlation, IndependentMargins) {
    Portfolio p = tab1();
    p.corr.rho = {{1, 0}, {0, 1}};
    p.corr.loadings = {0.0, 0.0};
    EXPECT_NEAR(instantaneous_correlation(p, 0, 1), 0.0, 1e-15);
}

TEST(Correlation, PureDiffusion) {
    Portfolio p = tab1(false);
    p.banks[1].sigma = p.banks[0].sigma;
    EXPECT_NEAR(instantaneous_correlation(p, 0, 1), 0.5, 1e-15);
}

TEST(Correlation, MatchesMonteCarloIncrements) {
    // Correlation of log-asset increments over a short horizon.
    const Portfolio p = tab1();
    const double dt = 0.05;
    const std::size_t paths = 400000;
    detail::CounterRng rng(7, 0, false);
    const auto chol = detail::cholesky_psd(p.corr.rho);
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    auto compound = [&](const JumpSpec& spec, double scale) {
        const double lam = jump_intensity(spec);
        double total = 0.0, t = rng.exponential(lam);
        while (t < dt) {
            total += scale * detail::draw_jump(spec, rng);
            t += rng.exponential(lam);
        }
        return total;
    };
    for (std::size_t k = 0; k < paths; ++k) {
        const double z1 = rng.normal(), z2 = rng.normal();
        const double w1 = chol[0][0] * z1, w2 = chol[1][0] * z1 + chol[1][1] * z2;
        const double common = compound(p.corr.common, 1.0);
        const double x = p.banks[0].sigma * std::sqrt(dt) * w1 + compound(p.idio[0], 1.0) + 0.2 * common;
        const double y = p.banks[1].sigma * std::sqrt(dt) * w2 + compound(p.idio[1], 1.0) + 0.3 * common;
        sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
    }
    const double n = static_cast<double>(paths);
    const double cov = sxy / n - sx * sy / (n * n);
    const double corr = cov / std::sqrt((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
    const double stderr_ = (1.0 - corr * corr) / std::sqrt(n);
    // Heavy-tailed increments widen the sampling error; allow 3 x a doubled normal-theory stderr.
    EXPECT_NEAR(corr, instantaneous_correlation(p, 0, 1), 6.0 * stderr_);
}

TEST(CosineLaw, PaperValue) {
    EXPECT_NEAR(correlation_cosine_law(0.3, 0.5, 2.0 * std::numbers::pi / 5.0), 0.4053, 5e-5);
}

TEST(CosineLaw, Orthogonal) { EXPECT_NEAR(correlation_cosine_law(0.0, 0.0, std::numbers::pi / 2.0), 0.0, 1e-15); }

TEST(CosineLaw, Colinear) { EXPECT_NEAR(correlation_cosine_law(0.0, 0.0, 0.0), 1.0, 1e-15); }

TEST(CosineLaw, BoundedAndSymmetric) {
    for (double a : {-0.9, -0.3, 0.0, 0.4, 0.99})
        for (double b : {-0.7, 0.1, 0.8})
            for (double phi : {0.0, 1.0, 2.0, 3.0}) {
                const double v = correlation_cosine_law(a, b, phi);
                EXPECT_GE(v, -1.0);
                EXPECT_LE(v, 1.0);
                EXPECT_DOUBLE_EQ(v, correlation_cosine_law(b, a, phi));
            }
}

TEST(Netting, ZeroLiabilitiesIdentity) {
    Portfolio p = tab1();
    p.liabilities = {{0, 0}, {0, 0}};
    EXPECT_EQ(netted_scenario(p), p);
}

TEST(Netting, Tab1) {
    const Portfolio q = netted_scenario(tab1());
    EXPECT_DOUBLE_EQ(q.banks[0].l0, 70.0);
    EXPECT_DOUBLE_EQ(q.banks[1].l0, 70.0);
    EXPECT_DOUBLE_EQ(q.liabilities[0][1], 0.0);
    EXPECT_DOUBLE_EQ(q.liabilities[1][0], 0.0);
}

TEST(Netting, Tab3d) {
    const Portfolio q = netted_scenario(tab3d());
    EXPECT_DOUBLE_EQ(q.banks[0].l0, 45.0);
    EXPECT_DOUBLE_EQ(q.banks[1].l0, 65.0);
    EXPECT_DOUBLE_EQ(q.banks[2].l0, 65.0);
}

TEST(Netting, Idempotent) {
    const Portfolio q = netted_scenario(tab3d());
    EXPECT_EQ(netted_scenario(q), q);
}

TEST(Netting, NegativeLiabilityClampedWithWarning) {
    Portfolio p = tab1();
    p.liabilities[0][1] = 100.0;
    std::vector<std::string> warnings;
    const Portfolio q = netted_scenario(p, &warnings);
    EXPECT_DOUBLE_EQ(q.banks[0].l0, 0.0);
    EXPECT_FALSE(warnings.empty());
}

namespace {

LocalVolTable load_table(const char* name) {
    return detail::read_local_vol_csv(std::filesystem::path(LDL_CONFIG_DIR) / name);
}

}  // namespace

TEST(LocalVol, Table1Entry) { EXPECT_NEAR(local_vol(load_table("locvol1.csv"), 0.1, 100.0), 0.462, 1e-15); }

TEST(LocalVol, Table2Entry) {
    // The table stores 0.723 at (0.8, 140); 0.722 sits at (0.8, 120) and (0.8, 130).
    const auto t = load_table("locvol2.csv");
    EXPECT_NEAR(local_vol(t, 0.8, 140.0), 0.723, 1e-15);
    EXPECT_NEAR(local_vol(t, 0.8, 130.0), 0.722, 1e-15);
}

TEST(LocalVol, ReproducesAllNodes) {
    for (const char* name : {"locvol1.csv", "locvol2.csv"}) {
        const auto t = load_table(name);
        for (std::size_t i = 0; i < t.times.size(); ++i)
            for (std::size_t j = 0; j < t.assets.size(); ++j)
                EXPECT_DOUBLE_EQ(local_vol(t, t.times[i], t.assets[j]), t.vols[i][j]);
    }
}

TEST(LocalVol, FlatExtrapolationAndMonotoneRows) {
    const auto t = load_table("locvol1.csv");
    EXPECT_DOUBLE_EQ(local_vol(t, 0.0, 10.0), t.vols.front().front());
    EXPECT_DOUBLE_EQ(local_vol(t, 5.0, 1000.0), t.vols.back().back());
    double prev = 0.0;
    for (double a = 70.0; a <= 150.0; a += 2.5) {
        const double v = local_vol(t, 0.3, a);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(LocalVol, EmptyTableIsConfigError) { EXPECT_THROW(LocalVolTable{}.validate(), ConfigError); }

TEST(Validation, KouExistenceCondition) {
    Portfolio p = tab1();
    p.corr.loadings = {3.5, 0.3};
    EXPECT_THROW(validate(p), ConfigError);
}

TEST(Validation, CorrelationNotPsd) {
    Portfolio p = tab3d();
    p.corr.rho = {{1, 0.9, -0.9}, {0.9, 1, 0.9}, {-0.9, 0.9, 1}};
    EXPECT_THROW(validate(p), ConfigError);
}
