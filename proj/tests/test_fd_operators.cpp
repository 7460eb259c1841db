#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ldl/banded.hpp"
#include "ldl/em_matrix.hpp"
#include "ldl/jump_idio.hpp"

using namespace ldl;

namespace {

std::vector<double> uniform(std::size_t n, double lo, double hi) {
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    return x;
}

std::vector<double> stretched(std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = static_cast<double>(k) / static_cast<double>(n - 1);
        x[k] = u + 0.3 * std::sin(3.14159265358979 * u) / 3.14159265358979;
    }
    return x;
}

// Rows whose stencil is the full-order interior one.
bool interior_row(DerivKind k, std::size_t i, std::size_t n) {
    switch (k) {
        case DerivKind::F2: return i + 2 < n;
        case DerivKind::B2: return i >= 2;
        case DerivKind::F: return i + 1 < n;
        case DerivKind::B: return i >= 1;
        default: return i >= 1 && i + 1 < n;
    }
}

double max_error(DerivKind kind, const std::vector<double>& x) {
    const BandedMatrix m = derivative_matrix(x, kind);
    std::vector<double> f(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) f[k] = std::sin(2.0 * x[k]);
    const auto d = m.apply(f);
    const bool second = kind == DerivKind::C2;
    double e = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!interior_row(kind, k, x.size())) continue;
        const double exact = second ? -4.0 * std::sin(2.0 * x[k]) : 2.0 * std::cos(2.0 * x[k]);
        e = std::max(e, std::abs(d[k] - exact));
    }
    return e;
}

}  // namespace

TEST(DerivativeMatrix, AnnihilatesConstants) {
    const auto x = stretched(30);
    const std::vector<double> one(x.size(), 1.0);
    for (auto kind : {DerivKind::F, DerivKind::B, DerivKind::C, DerivKind::F2, DerivKind::B2, DerivKind::C2}) {
        const auto d = derivative_matrix(x, kind).apply(one);
        for (double v : d) EXPECT_NEAR(v, 0.0, 1e-10) << to_string(kind);
    }
}

TEST(DerivativeMatrix, ExactOnLinearsUniform) {
    const auto x = uniform(20, 0.0, 2.0);
    std::vector<double> f(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) f[k] = 3.0 * x[k] - 1.0;
    for (auto kind : {DerivKind::F2, DerivKind::B2, DerivKind::C}) {
        const auto d = derivative_matrix(x, kind).apply(f);
        for (std::size_t k = 0; k < x.size(); ++k)
            if (interior_row(kind, k, x.size())) {
                EXPECT_NEAR(d[k], 3.0, 1e-12) << to_string(kind);
            }
    }
}

TEST(DerivativeMatrix, SecondDerivativeOfSquare) {
    const auto x = uniform(15, -1.0, 2.0);
    std::vector<double> f(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) f[k] = x[k] * x[k];
    const auto d = derivative_matrix(x, DerivKind::C2).apply(f);
    for (std::size_t k = 1; k + 1 < x.size(); ++k) EXPECT_NEAR(d[k], 2.0, 1e-10);
}

TEST(DerivativeMatrix, UniformStencils) {
    const double h = 0.25;
    const auto x = uniform(9, 0.0, 2.0);
    const auto f2 = derivative_matrix(x, DerivKind::F2);
    EXPECT_DOUBLE_EQ(f2(3, 3), -3.0 / (2 * h));
    EXPECT_DOUBLE_EQ(f2(3, 4), 4.0 / (2 * h));
    EXPECT_DOUBLE_EQ(f2(3, 5), -1.0 / (2 * h));
    const auto b2 = derivative_matrix(x, DerivKind::B2);
    EXPECT_DOUBLE_EQ(b2(4, 2), 1.0 / (2 * h));
    EXPECT_DOUBLE_EQ(b2(4, 3), -4.0 / (2 * h));
    EXPECT_DOUBLE_EQ(b2(4, 4), 3.0 / (2 * h));
    const auto fb = derivative_matrix(x, DerivKind::F) * derivative_matrix(x, DerivKind::B);
    const auto c2 = derivative_matrix(x, DerivKind::C2);
    for (std::size_t i = 1; i + 1 < x.size(); ++i)
        for (std::size_t j = i - 1; j <= i + 1; ++j) EXPECT_NEAR(c2(i, j), fb(i, j), 1e-12);
}

TEST(DerivativeMatrix, TruncationOrders) {
    for (auto kind : {DerivKind::F2, DerivKind::B2, DerivKind::C, DerivKind::C2, DerivKind::F, DerivKind::B}) {
        const double e1 = max_error(kind, stretched(41));
        const double e2 = max_error(kind, stretched(81));
        const double order = std::log2(e1 / e2);
        const bool first = kind == DerivKind::F || kind == DerivKind::B;
        EXPECT_GE(order, first ? 0.9 : 1.9) << to_string(kind);
    }
}

TEST(DerivativeMatrix, TooFewNodes) {
    EXPECT_THROW(derivative_matrix({0.0, 1.0}, DerivKind::C), ConfigError);
}

TEST(EmMatrix, Identity) {
    const auto rep = check_em_matrix(Eigen::MatrixXd::Identity(4, 4));
    EXPECT_TRUE(rep.is_em);
    EXPECT_LT(rep.spectral_radius_bound, 1.0);
}

TEST(EmMatrix, IdentityWithShiftTwo) {
    // s = 2, B = I: rho(B) = 1 < 2.
    const Eigen::MatrixXd b = Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd m = 2.0 * Eigen::MatrixXd::Identity(3, 3) - b;
    EXPECT_TRUE(check_em_matrix(m).is_em);
    EXPECT_LT(spectral_radius(b), 2.0);
}

TEST(EmMatrix, KouResolventMatrix) {
    const double theta = 3.0465, b = -0.2, s = theta + 1.0;
    const auto x = uniform(10, 0.0, 0.09);
    const BandedMatrix a = derivative_matrix(x, DerivKind::B2);
    const BandedMatrix m = a.shifted(-b, s + 0.5 * theta);
    const auto rep = check_em_matrix(m);
    EXPECT_TRUE(rep.is_em);
    const Eigen::MatrixXd inv = to_eigen(m).inverse();
    EXPECT_TRUE(entrywise_nonnegative(inv));
}

TEST(EmMatrix, Counterexample) {
    Eigen::MatrixXd m(3, 3);
    m << 1, -2, 0, -2, 1, 0, 0, 0, 1;
    EXPECT_FALSE(check_em_matrix(m).is_em);
}

TEST(EmMatrix, FineKouFactorIsEmWithNonnegativeInverse) {
    const double theta = 3.0465, b = 0.3, s = theta + 1.0;
    const auto x = uniform(200, std::log(25.0), std::log(500.0));
    const BandedMatrix m = derivative_matrix(x, DerivKind::F2).shifted(-b, s + 0.5 * theta);
    const auto rep = check_em_matrix(m);
    EXPECT_TRUE(rep.is_em);
    EXPECT_TRUE(rep.triangular_sign_test);
    EXPECT_TRUE(entrywise_nonnegative(to_eigen(m).inverse()));
}

TEST(EmMatrix, TriangularEventuallyNegativeEntry) {
    // B(0, 1) < 0 with distinct diagonal entries: (B^k)(0, 1) < 0 for every k.
    Eigen::MatrixXd b(3, 3);
    b << 0.0204, -0.2312, 1.2187, 0, 0.0111, 0.939, 0, 0, 0.2857;
    EXPECT_FALSE(detail::upper_triangular_eventually_nonnegative(b, 1e-10));
    Eigen::MatrixXd c(3, 3);
    c << 0.5, 0.3, -0.01, 0, 0.2, 0.4, 0, 0, 0.1;
    EXPECT_TRUE(detail::upper_triangular_eventually_nonnegative(c, 1e-10));
    Eigen::MatrixXd p = c;
    for (int k = 1; k < 60; ++k) p = p * c;
    EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(EmMatrix, ConvergenceFactorBelowOne) {
    for (double b : {-0.05, -0.2, -0.3})
        for (double h : {0.01, 0.05, 0.2})
            for (double theta : {1.5, 3.0465}) {
                const double s = 0.5 * theta + 3.0 * std::abs(b) / h + 0.1;
                EXPECT_LT(adi_convergence_factor(s, theta, b, h), 1.0);
            }
}

TEST(EmMatrix, SizeCapGivesPartialReport) {
    EmCheckOptions opt;
    opt.size_cap = 5;
    const auto rep = check_em_matrix(Eigen::MatrixXd::Identity(8, 8), opt);
    EXPECT_TRUE(rep.partial);
    EXPECT_FALSE(rep.is_em);
}

TEST(SolveBanded, Identity) {
    const BandedMatrix id = BandedMatrix::identity(5, 1, 1);
    const std::vector<double> rhs{1, -2, 3, 0.5, 7};
    const auto x = solve_banded(id, rhs);
    for (std::size_t k = 0; k < rhs.size(); ++k) EXPECT_DOUBLE_EQ(x[k], rhs[k]);
}

TEST(SolveBanded, ToeplitzTridiagonal) {
    const std::size_t n = 50;
    BandedMatrix m(n, 1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 2.0;
        if (i > 0) m(i, i - 1) = -1.0;
        if (i + 1 < n) m(i, i + 1) = -1.0;
    }
    std::vector<double> truth(n);
    for (std::size_t i = 0; i < n; ++i) truth[i] = static_cast<double>(i + 1);
    const auto x = solve_banded(m, m.apply(truth));
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(x[i], truth[i], 1e-9);
}

TEST(SolveBanded, PentadiagonalPadeSystemVsDense) {
    std::vector<double> a(20);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = 40.0 * std::exp(0.05 * static_cast<double>(k));
    const ExpJumpGenerator g = exp_jump_generator(a, ExpNegativeJumps{0.7, 2.0});
    const BandedMatrix lhs = g.m.combine(1.0, g.k, -0.5 * g.coef * 0.01);
    std::vector<double> rhs(a.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = std::cos(0.3 * static_cast<double>(k));
    const auto x = solve_banded(lhs, rhs);
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    const Eigen::VectorXd ref = to_eigen(lhs).partialPivLu().solve(r);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], ref(static_cast<Eigen::Index>(k)), 1e-10);
    const auto back = lhs.apply(x);
    double res = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        res = std::max(res, std::abs(back[k] - rhs[k]));
        scale = std::max(scale, std::abs(rhs[k]));
    }
    EXPECT_LE(res, 1e-10 * scale);
}

TEST(SolveBanded, SingularPivot) {
    BandedMatrix m(3, 1, 1);
    m(0, 0) = 0.0;
    m(1, 1) = 1.0;
    m(2, 2) = 1.0;
    EXPECT_THROW(solve_banded(m, {1, 1, 1}), NumericalError);
}

TEST(SolveBanded, LinearScaling) {
    auto timed = [](std::size_t n) {
        BandedMatrix m(n, 2, 2);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 6.0;
            if (i >= 1) m(i, i - 1) = -1.0;
            if (i >= 2) m(i, i - 2) = -1.0;
            if (i + 1 < n) m(i, i + 1) = -1.0;
            if (i + 2 < n) m(i, i + 2) = -1.0;
        }
        const std::vector<double> rhs(n, 1.0);
        double best = 1e300;
        for (int rep = 0; rep < 5; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            auto x = solve_banded(m, rhs);
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            EXPECT_FALSE(x.empty());
        }
        return best;
    };
    const double t1 = timed(200000), t2 = timed(400000);
    EXPECT_LE(t2 / t1, 2.5);
}
