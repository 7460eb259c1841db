#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "ldl/config.hpp"
#include "ldl/oracle.hpp"
#include "ldl/solver.hpp"

using namespace ldl;
using ldl::testing::one_bank;
using ldl::testing::tab1;

namespace {

Portfolio lone(double a0, double l0, double recovery, double sigma) {
    Portfolio p = one_bank(a0, l0, sigma);
    p.banks[0].recovery = recovery;
    return p;
}

NumericsConfig coarse(std::size_t nodes = 40, double dtau = 0.02) {
    NumericsConfig n;
    n.nodes = {nodes};
    n.dtau = dtau;
    return n;
}

}  // namespace

TEST(Solver, VanishingVolatilityGivesCertainSurvival) {
    const SurvivalField f = joint_survival(one_bank(100.0, 40.0, 1e-6), coarse());
    EXPECT_NEAR(survival_at(f, {100.0}), 1.0, 1e-10);
    EXPECT_NEAR(survival_at(f, {60.0}), 1.0, 1e-10);
}

TEST(Solver, OneBankMatchesClosedForm) {
    const Portfolio p = one_bank();
    const SurvivalField f = joint_survival(p, coarse(100, 0.01));
    const double barrier = pre_maturity_level(p, 0);
    for (double a : {45.0, 50.0, 60.0, 80.0, 100.0, 150.0}) {
        const double exact = analytic_survival_diffusion_1d(a, barrier, 0.2, 0.05, 1.0);
        EXPECT_NEAR(survival_at(f, {a}) / exact, 1.0, 1e-2) << "a0=" << a;
    }
}

TEST(Solver, ExponentialJumpTableEndpoints) {
    const RunConfig cfg = parse_config(std::string(LDL_CONFIG_DIR) + "/tabcomp.ini");
    const SurvivalField f = joint_survival(cfg.portfolio, cfg.numerics);
    EXPECT_NEAR(survival_at(f, {40.85}), 0.008805, 5e-3);
    EXPECT_NEAR(survival_at(f, {55.60}), 0.195123, 5e-3);
}

TEST(Solver, TwoBankInvariants) {
    const SurvivalField f = joint_survival(tab1(), coarse());
    const InvariantReport rep = check_invariants(f);
    EXPECT_TRUE(rep.ok) << "min " << rep.min_value << " max " << rep.max_value << " face " << rep.barrier_face_max
                        << " monotone " << rep.monotonicity_violation;
    EXPECT_EQ(f.rank(), 2u);
    EXPECT_GT(f.stats.picard_steps, 0u);
}

TEST(Solver, SurvivalDecreasesWithHorizon) {
    Portfolio p = tab1();
    double last = 1.0;
    for (double t : {0.2, 0.6, 1.0}) {
        p.maturity = t;
        const double q = survival_at(joint_survival(p, coarse()), {110.0, 100.0});
        EXPECT_LE(q, last + 1e-6) << "T=" << t;
        last = q;
    }
}

TEST(Solver, JointBelowMarginal) {
    const Portfolio p = tab1();
    const NumericsConfig n = coarse();
    const SurvivalField j = joint_survival(p, n);
    for (std::size_t bank : {0u, 1u}) {
        const SurvivalField m = marginal_survival_2d(p, n, bank);
        for (const auto& pt : std::vector<std::vector<double>>{{110, 100}, {150, 130}, {95, 120}})
            EXPECT_GE(survival_at(m, pt), survival_at(j, pt) - 1e-6) << "bank " << bank;
    }
}

TEST(Solver, MarginalDecouplesWithoutInteraction) {
    Portfolio p = tab1(false);
    p.liabilities = {{0, 0}, {0, 0}};
    p.corr.rho = {{1, 0}, {0, 1}};
    p.corr.loadings = {0, 0};
    const NumericsConfig n = coarse(60, 0.01);
    const SurvivalField m = marginal_survival_2d(p, n, 0);
    const SurvivalField single = joint_survival(lone(110, 80, 0.4, 0.2), n);
    for (double a1 : {90.0, 110.0, 140.0})
        for (double a2 : {95.0, 130.0}) EXPECT_NEAR(survival_at(m, {a1, a2}), survival_at(single, {a1}), 2e-3);
}

TEST(Solver, IndependentBanksFactorize) {
    Portfolio p = tab1(false);
    p.liabilities = {{0, 0}, {0, 0}};
    p.corr.rho = {{1, 0}, {0, 1}};
    p.corr.loadings = {0, 0};
    const NumericsConfig n = coarse(60, 0.01);
    const SurvivalField j = joint_survival(p, n);
    const SurvivalField s1 = joint_survival(lone(110, 80, 0.4, 0.2), n);
    const SurvivalField s2 = joint_survival(lone(100, 85, 0.35, 0.3), n);
    for (const auto& pt : std::vector<std::vector<double>>{{110, 100}, {150, 130}})
        EXPECT_NEAR(survival_at(j, pt), survival_at(s1, {pt[0]}) * survival_at(s2, {pt[1]}), 2e-3);
}

TEST(Solver, DeltaVanishesWithoutLiabilities) {
    Portfolio p = tab1();
    p.liabilities = {{0, 0}, {0, 0}};
    const DeltaResult d = delta_q(p, coarse(), DeltaKind::joint);
    for (std::size_t k = 0; k < d.difference.size(); ++k) EXPECT_EQ(d.difference[k], 0.0);
}

TEST(Solver, DeltaFieldsShareGrids) {
    const DeltaResult d = delta_q(tab1(), coarse(), DeltaKind::marginal, 0);
    ASSERT_TRUE(d.difference.same_shape(d.with_liabilities.values));
    for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(d.with_liabilities.grids[a].nodes, d.netted.grids[a].nodes);
}

TEST(Solver, ThreeBankSmoke) {
    NumericsConfig n = coarse(12, 0.1);
    n.jump_upper = 1e4;
    n.jump_nodes = 20;
    const Run3dResult r = run_3d(ldl::testing::tab3d(), n);
    EXPECT_NEAR(r.rho_xy, 0.4053, 5e-5);
    EXPECT_EQ(r.slices.size(), 3u);
    EXPECT_EQ(r.field.rank(), 3u);
    EXPECT_GE(r.field.values.min(), -1e-12);
    EXPECT_LE(r.field.values.max(), 1.0 + 1e-9);
}

TEST(Solver, RejectsBadNumerics) {
    NumericsConfig n = coarse();
    n.dtau = 0.3;
    EXPECT_THROW(joint_survival(one_bank(), n), ConfigError);
    n = coarse();
    n.nodes = {4};
    EXPECT_THROW(joint_survival(one_bank(), n), ConfigError);
    EXPECT_THROW(marginal_survival_2d(one_bank(), coarse(), 0), ConfigError);
}

TEST(Solver, InterpolationIsExactAtNodes) {
    const SurvivalField f = joint_survival(one_bank(), coarse());
    const auto& g = f.grids[0];
    for (std::size_t k = f.lo[0]; k <= f.hi[0]; k += 5) EXPECT_DOUBLE_EQ(survival_at(f, {g.nodes[k]}), f.values[k]);
    EXPECT_EQ(survival_at(f, {30.0}), 0.0);
}
